import numpy as np
import pytest

from tilmil.grid import (DEFAULT_LEARNING_RATES, DEFAULT_REGS, CellResult, GridReport, GridSpec,
                         run_grid, select_best)
from tilmil.splits import patients_of, stratified_kfold
from tilmil.synth import SynthConfig, generate
from tilmil.train import TrainConfig


@pytest.fixture(scope="module")
def small():
    bags, _ = generate(SynthConfig(num_bags=40, tiles_per_bag_range=(5, 15), h_dim=4, seed=9))
    thr = float(np.median([b.label for b in bags]))
    plan = stratified_kfold(patients_of(bags), 5, 0)
    return bags, plan, TrainConfig(epochs=3, binarize_threshold=thr)


def test_default_grid_shape():
    spec = GridSpec()
    assert len(spec.learning_rates) * len(spec.regs) == 48
    assert spec.learning_rates == DEFAULT_LEARNING_RATES and spec.regs == DEFAULT_REGS


def test_spec_must_decrease():
    with pytest.raises(ValueError):
        GridSpec(learning_rates=(1e-3, 1e-2))
    with pytest.raises(ValueError):
        GridSpec(regs=())


def test_one_by_one_grid(small):
    bags, plan, base = small
    report = run_grid(GridSpec((1e-2,), (1e-4,), base), plan, bags)
    assert len(report.cells) == 1
    assert len(report.cells[0].fold_aucs) == 5
    assert select_best(report) == (1e-2, 1e-4)
    assert report.to_csv().splitlines()[0] == "lr,reg,fold,best_val_auc"
    assert len(report.to_csv().splitlines()) == 6


def test_jobs_do_not_change_results(small):
    bags, plan, base = small
    spec = GridSpec((1e-2, 1e-3), (1e-4,), base)
    a = run_grid(spec, plan, bags, jobs=1)
    b = run_grid(spec, plan, bags, jobs=2)
    assert a.to_csv() == b.to_csv() and a.to_text() == b.to_text()


def test_cell_independent_of_grid_composition(small):
    bags, plan, base = small
    full = run_grid(GridSpec((1e-2, 1e-3), (1e-4,), base), plan, bags)
    alone = run_grid(GridSpec((1e-2,), (1e-4,), base), plan, bags)
    assert full.cell(1e-2, 1e-4).fold_aucs == alone.cell(1e-2, 1e-4).fold_aucs


def test_errors_recorded_per_cell(small):
    bags, plan, base = small
    base = TrainConfig(epochs=1, binarize_threshold=1.0)  # single-class validation
    report = run_grid(GridSpec((1e-2,), (1e-4,), base), plan, bags)
    assert report.cells[0].errors and report.cells[0].mean is None
    with pytest.raises(ValueError):
        select_best(report)


def _report(cells):
    lrs = tuple(sorted({c.lr for c in cells}, reverse=True))
    regs = tuple(sorted({c.reg for c in cells}, reverse=True))
    return GridReport(GridSpec(lrs, regs), cells)


def test_select_best_tie_breaks():
    cells = [CellResult(1e-2, 1e-3, (0.9, 0.8)), CellResult(1e-2, 1e-4, (0.85, 0.85)),
             CellResult(1e-3, 1e-3, (0.8, 0.9)), CellResult(1e-3, 1e-4, (0.7, 0.7))]
    assert select_best(_report(cells)) == (1e-3, 1e-3)
    cells[3] = CellResult(1e-3, 1e-4, (0.9, 0.8))
    assert select_best(_report(cells)) == (1e-3, 1e-4)


def test_cell_stats_scaled_by_100():
    c = CellResult(1e-2, 1e-3, (0.9, 0.8))
    assert c.mean == pytest.approx(85.0)
    assert c.std == pytest.approx(np.std([90, 80], ddof=1))


def test_text_matrix_layout():
    cells = [CellResult(1e-2, 1e-3, (0.9, 0.8)), CellResult(1e-2, 1e-4, (0.5, None), ("fold 1: x",))]
    text = _report(cells).to_text().splitlines()
    assert len(text) == 2
    assert "85.0±7.1" in text[1] and text[1].endswith("error")
