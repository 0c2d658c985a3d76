import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

import main
from conftest import two_tone
from evaluate import (
    IFFT_BASELINE,
    INVERSE_NFFT,
    EvalReport,
    MaskMode,
    ReplicateMetrics,
    run_protocol,
)
from kernels import KernelFamily, sobolev_kernel
from pipeline_manager import (
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    PipelineManager,
    RunConfig,
)
from report_writer import (
    ReportWriter,
    read_json_report,
    read_kernel_csv,
    read_reconstruction_csv,
    read_replicates_csv,
    read_spectrum_csv,
    read_transform_csv,
)
from series_loader import ingest_csv
from solver import SolveMethod, inverse_adjoint
from spectral_core import SampledSeries


def write_series(path, m=96, gap=None, cadence=600):
    t = 1_600_000_000 + cadence * np.arange(m)
    keep = np.ones(m, dtype=bool)
    if gap is not None:
        keep[gap[0]:gap[1]] = False
    x = np.arange(m) / m - 0.5
    values = 12.0 + two_tone(x)
    lines = ["timestamp,value"] + [f"{ti},{float(vi)!r}" for ti, vi in zip(t[keep], values[keep])]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_config(path, **entries):
    path.write_text("".join(f"{k}={v}\n" for k, v in entries.items()), encoding="utf-8")
    return path


@pytest.fixture
def gapped_csv(tmp_path):
    return write_series(tmp_path / "gapped.csv", gap=(40, 60))


def config_for(tmp_path, input_path, **extra):
    return RunConfig.from_mapping({
        'input_path': str(input_path),
        'output_dir': str(tmp_path / "out"),
        'n_coeffs': '16',
        **{k: str(v) for k, v in extra.items()},
    })


def test_config_defaults():
    config = RunConfig()
    assert config.n_coeffs == 1024
    assert config.kernel_family is KernelFamily.SOBOLEV
    assert config.kernel_gamma == 1e-2
    assert config.kernel_gammas == (1e-2,)
    assert config.mask_modes == (MaskMode.RANDOM, MaskMode.CONTIGUOUS_BLOCK)
    assert config.mask_fractions == (0.1, 0.2, 0.3)
    assert config.replicates == 7
    assert config.permutations == 10_000
    assert config.record_timings is False


def test_config_from_file_resolves_paths(tmp_path):
    path = write_config(tmp_path / "run.cfg", input_path="data/series.csv",
                        kernel_gammas="0.1, 0.01,0.001", mask_modes="block",
                        record_timings="true")
    config = RunConfig.from_file(path)
    assert config.input_path == (tmp_path / "data" / "series.csv").resolve()
    assert config.output_dir == (tmp_path / "output").resolve()
    assert config.kernel_gammas == (0.1, 0.01, 0.001)
    assert config.mask_modes == (MaskMode.CONTIGUOUS_BLOCK,)
    assert config.record_timings is True


def test_gamma_override_replaces_both_gamma_keys(tmp_path):
    path = write_config(tmp_path / "run.cfg", kernel_gammas="0.1,0.01")
    config = RunConfig.from_file(path, overrides={'kernel_gamma': 0.5, 'seed': None})
    assert config.kernel_gamma == 0.5
    assert config.kernel_gammas == (0.5,)
    assert config.seed == 0


@pytest.mark.parametrize("key, value", [
    ('n_coeffs', '15'),
    ('kernel_gamma', '0'),
    ('kernel_gammas', '0.1,-1'),
    ('kernel_alpha', '-1'),
    ('kernel_beta', '1.5'),
    ('mask_fractions', '0.1,1.2'),
    ('replicates', '0'),
    ('permutations', '50'),
    ('kernel_family', 'gaussian'),
    ('mask_modes', 'random,diagonal'),
    ('record_timings', 'maybe'),
    ('colour', 'blue'),
])
def test_config_validation(key, value):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({key: value})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "absent.cfg")


def test_cmd_solve_writes_outputs(tmp_path, gapped_csv):
    config = config_for(tmp_path, gapped_csv)
    manager = PipelineManager(config)
    exported = manager.cmd_solve()
    assert set(exported) == {'spectrum', 'reconstruction', 'solve_report'}

    report = read_json_report(exported['solve_report'])
    assert report['method'] in (SolveMethod.KAILATH_LU.value, SolveMethod.DENSE_ORACLE.value)
    assert report['stationarity_residual'] <= 1e-8
    assert report['config'] == config.to_dict()
    assert 'timings' not in report

    spectrum, weights = read_spectrum_csv(exported['spectrum'])
    assert spectrum.n_coeffs == 16
    assert_allclose(weights, sobolev_kernel(16).weights, rtol=0, atol=0)

    table = read_reconstruction_csv(exported['reconstruction'])
    assert table.dense_nodes.size == max(4 * 16, 2 * 76)
    assert table.observed_nodes.size == 76
    assert table.observed_timestamps is not None


def test_reconstruction_file_round_trips_exactly(tmp_path, gapped_csv):
    config = config_for(tmp_path, gapped_csv)
    exported = PipelineManager(config).cmd_solve()
    series = ingest_csv(gapped_csv)
    solution = inverse_adjoint(series, sobolev_kernel(16), 16)

    table = read_reconstruction_csv(exported['reconstruction'])
    assert_allclose(table.observed_nodes, series.nodes, rtol=0, atol=0)
    assert_allclose(table.observed_fit, solution.reconstruct(series.nodes), rtol=0, atol=1e-12)
    assert_allclose(table.observed_values, series.values, rtol=0, atol=0)

    spectrum, _ = read_spectrum_csv(exported['spectrum'])
    assert_allclose(spectrum.coeffs, solution.spectrum.coeffs, rtol=0, atol=0)


def test_solve_interpolates_across_gap(tmp_path, gapped_csv):
    config = config_for(tmp_path, gapped_csv, n_coeffs=32)
    exported = PipelineManager(config).cmd_solve()
    table = read_reconstruction_csv(exported['reconstruction'])
    in_gap = (table.dense_nodes > 40 / 96 - 0.5) & (table.dense_nodes < 59 / 96 - 0.5)
    truth = 12.0 + two_tone(table.dense_nodes[in_gap])
    assert in_gap.sum() > 10
    rms = np.sqrt(np.mean((table.dense_values[in_gap] - truth) ** 2))
    spread = np.sqrt(np.mean((truth - truth.mean()) ** 2))
    assert rms < 0.5 * spread


def test_solve_equispaced_uses_closed_form(tmp_path):
    csv_path = write_series(tmp_path / "full.csv")
    exported = PipelineManager(config_for(tmp_path, csv_path)).cmd_solve()
    report = read_json_report(exported['solve_report'])
    assert report['method'] == SolveMethod.EQUISPACED_CLOSED_FORM.value
    assert report['equispaced'] is True


def test_record_timings(tmp_path, gapped_csv):
    config = config_for(tmp_path, gapped_csv, record_timings='true')
    exported = PipelineManager(config).cmd_solve()
    assert 'solve' in read_json_report(exported['solve_report'])['timings']


def test_cmd_eval_grid_and_determinism(tmp_path, gapped_csv):
    config = config_for(tmp_path, gapped_csv, replicates=3, permutations=200, seed=5)
    exported = PipelineManager(config).cmd_eval()
    report = read_json_report(exported['eval_report'])
    cells = [(c['mode'], c['fraction']) for c in report['cells']]
    assert cells == [(m, f) for m in ('random', 'block') for f in (0.1, 0.2, 0.3)]
    for cell in report['cells']:
        assert 0 < cell['p_values']['correlation'] <= 1
        assert cell['summary']['inverse_nfft']['correlation']['std'] >= 0

    rows = read_replicates_csv(exported['replicates'])
    assert len(rows) == 6 * 3 * 2
    first = {name: path.read_bytes() for name, path in exported.items()}

    rerun = PipelineManager(config).cmd_eval()
    assert {name: path.read_bytes() for name, path in rerun.items()} == first


def test_cmd_kernel_columns(tmp_path):
    config = RunConfig.from_mapping({'output_dir': str(tmp_path), 'n_coeffs': '32',
                                     'kernel_gammas': '0.1,0.01,0.001'})
    exported = PipelineManager(config).cmd_kernel()
    z, curves = read_kernel_csv(exported['kernel'])
    assert_allclose(z, np.arange(-16, 16) / 32)
    assert sorted(curves) == [0.001, 0.01, 0.1]
    assert_allclose(curves[0.01], sobolev_kernel(32, gamma=0.01).weights, rtol=0, atol=0)


def test_cmd_kernel_default_gamma(tmp_path):
    config = RunConfig.from_mapping({'output_dir': str(tmp_path), 'n_coeffs': '8'})
    _, curves = read_kernel_csv(PipelineManager(config).cmd_kernel()['kernel'])
    assert list(curves) == [0.01]


def test_cmd_transform_reports_gram_diagnostics(tmp_path):
    csv_path = write_series(tmp_path / "full.csv", m=64)
    exported = PipelineManager(config_for(tmp_path, csv_path)).cmd_transform()
    report = read_json_report(exported['transform_report'])
    assert report['gram_identity_deviation'] <= 1e-9 * 64
    spectrum = read_transform_csv(exported['transform'])
    assert spectrum.n_coeffs == 16
    assert spectrum.coeffs[8] == pytest.approx(64 * 12.0, rel=1e-12)

    gapped = write_series(tmp_path / "gapped.csv", m=64, gap=(10, 20))
    exported = PipelineManager(config_for(tmp_path, gapped)).cmd_transform()
    assert read_json_report(exported['transform_report'])['max_off_diagonal'] > 1e-6


def test_run_maps_errors_to_exit_codes(tmp_path, gapped_csv):
    ok = PipelineManager(config_for(tmp_path, gapped_csv))
    assert ok.run('solve') == EXIT_OK
    assert ok.run('unknown') == EXIT_USAGE

    missing = PipelineManager(config_for(tmp_path, tmp_path / "absent.csv"))
    assert missing.run('solve') == EXIT_USAGE

    no_input = PipelineManager(RunConfig(output_dir=tmp_path))
    assert no_input.run('transform') == EXIT_USAGE


def test_run_reports_numerical_failure(tmp_path, gapped_csv, monkeypatch):
    import pipeline_manager
    from solver import SolverError

    def fail(*args, **kwargs):
        raise SolverError("dense system is not positive definite")

    monkeypatch.setattr(pipeline_manager, 'inverse_adjoint', fail)
    assert PipelineManager(config_for(tmp_path, gapped_csv)).run('solve') == EXIT_NUMERICAL


def test_replicates_csv_keeps_indices_after_failures(tmp_path):
    report = EvalReport(mode=MaskMode.CONTIGUOUS_BLOCK, fraction=0.2, replicates=4,
                        permutations=100)
    for replicate in (1, 3):
        for method in (INVERSE_NFFT, IFFT_BASELINE):
            report.per_replicate[method].append(
                ReplicateMetrics(mafe=0.1, correlation=0.9, relative_error=0.3,
                                 replicate=replicate))
    report.failures = [{'replicate': 0, 'seed': 11, 'error': "singular"},
                       {'replicate': 2, 'seed': 12, 'error': "singular"}]

    rows = read_replicates_csv(ReportWriter(tmp_path).write_replicates([report]))
    written = sorted({row['replicate'] for row in rows})
    failed = {f['replicate'] for f in report.failures}
    assert written == [1, 3]
    assert not failed & set(written)


def test_run_protocol_numbers_replicates_in_order():
    nodes = np.arange(64) / 64 - 0.5
    series = SampledSeries(nodes=nodes, values=12.0 + two_tone(nodes))
    report = run_protocol(series, 8, sobolev_kernel(8), [0.2], [MaskMode.RANDOM],
                          replicates=3, permutations=100)[0]
    for method in (INVERSE_NFFT, IFFT_BASELINE):
        assert [m.replicate for m in report.per_replicate[method]] == [0, 1, 2]


def test_writer_maps_nan_to_null(tmp_path):
    path = ReportWriter(tmp_path).write_json("r.json", {'b': float('nan'), 'a': np.int64(3)})
    text = path.read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"')
    assert read_json_report(path) == {'a': 3, 'b': None}
    assert not list(tmp_path.glob(".*.tmp"))


def test_read_json_report_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_json_report(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ValueError):
        read_json_report(bad)


def test_main_solve_end_to_end(tmp_path, gapped_csv, monkeypatch):
    monkeypatch.setenv('INGAP_LOG_DIR', str(tmp_path / "logs"))
    cfg = write_config(tmp_path / "run.cfg", input_path=gapped_csv.name, n_coeffs=16)
    code = main.main(['solve', '--config', str(cfg), '--out', str(tmp_path / "cli"),
                      '--gamma', '0.05'])
    assert code == EXIT_OK
    report = read_json_report(tmp_path / "cli" / "solve_report.json")
    assert report['config']['kernel_gamma'] == 0.05
    assert report['kernel']['gamma'] == 0.05


def test_main_exit_codes(tmp_path, monkeypatch, caplog):
    monkeypatch.setenv('INGAP_LOG_DIR', str(tmp_path / "logs"))
    monkeypatch.delenv('INGAP_CONFIG', raising=False)
    missing_input = write_config(tmp_path / "run.cfg", input_path="absent.csv")
    with caplog.at_level(logging.ERROR):
        assert main.main(['solve', '--config', str(missing_input)]) == EXIT_USAGE
    assert "absent.csv" in caplog.text

    assert main.main(['kernel', '--config', str(missing_input), '--n-coeffs', '7']) == EXIT_USAGE
    assert main.main(['solve']) == EXIT_USAGE
    assert main.main(['bogus']) == EXIT_USAGE
