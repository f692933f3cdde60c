"""Command-line experiment runner: gen-data, fit, compare, forecast.

Exit codes: 0 success, 1 comparison above tolerance, 2 validation failure,
3 numerical degeneracy, 4 I/O error.
"""

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from vpgmm.data.ingest import DatasetManifest, load_dataset, read_manifest, write_dataset
from vpgmm.data.slices import FullDataset, assemble
from vpgmm.data.synth import synth_generate
from vpgmm.domain.config import MEAN_MODES, PipelineConfig, get_config
from vpgmm.domain.models import ConditionalGmm, Dims, GmmParams
from vpgmm.errors import (
    ContractViolationError,
    DataFormatError,
    NumericalDegeneracyError,
    ProtocolError,
)
from vpgmm.gmm.conditional import conditional_params
from vpgmm.gmm.em import fit_centralized, initialize_params
from vpgmm.pdem.private_em import fit_distributed
from vpgmm.pdem.private_forecast import (
    ForecastContext,
    forecast,
    load_current_outputs,
    outputs_from_row,
)
from vpgmm.simnet.bus import Bus
from vpgmm.simnet.party import make_parties
from vpgmm.smc.traffic import centralized_traffic, table_one
from vpgmm.smc.wire import load_transcript
from vpgmm.utils.io import load_params, save_forecast_csv, save_params, save_quantiles_csv
from vpgmm.utils.paths import (
    ensure_dir_exists,
    get_data_dir,
    get_forecast_path,
    get_manifest_path,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INVALID = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4

SEPARATOR_LENGTH = 70
ITERS_COLUMNS = ["iter", "loglik", "up_bytes", "down_bytes"]


def print_separator() -> None:
    """Print a separator line."""
    print("=" * SEPARATOR_LENGTH)


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of one experiment, loaded from JSON and overridden by flags.

    Attributes:
        num_farms: M
        num_periods: T
        num_obs: I
        num_components: J
        seed: Seed for data generation, initialization and protocol masks
        tol: Relative log-likelihood tolerance
        max_iter: EM iteration cap
        capacities: Per-farm capacities (1.0 each when omitted)
        temporal_corr: Generator ρ_t
        spatial_corr: Generator ρ_s
        mean_mode: Conditional-mean mode
        data_dir: Directory of the per-farm CSV files
        out_dir: Directory for outputs (defaults to ``data_dir``)
    """

    num_farms: int = 10
    num_periods: int = 24
    num_obs: int = 1000
    num_components: int = 3
    seed: int = 42
    tol: float = 1e-8
    max_iter: int = 500
    capacities: tuple[float, ...] | None = None
    temporal_corr: float = 0.8
    spatial_corr: float = 0.5
    mean_mode: str = "exact"
    data_dir: str | None = None
    out_dir: str | None = None

    @classmethod
    def read_json(cls, path: Path) -> dict[str, object]:
        """Read a config file whose keys are field names.

        Raises:
            FileNotFoundError: If the file does not exist
            DataFormatError: If the file is not JSON or holds unknown keys
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{path}: invalid JSON: {e}") from e
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise DataFormatError(f"{path}: unknown config keys {unknown}")
        if payload.get("capacities") is not None:
            payload["capacities"] = tuple(float(c) for c in payload["capacities"])
        return payload

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest) -> "ExperimentConfig":
        """Config whose dims, seed, capacities and correlations come from a dataset manifest."""
        dims = manifest.dims
        return cls(
            num_farms=dims.num_farms,
            num_periods=dims.num_periods,
            num_obs=dims.num_obs,
            num_components=dims.num_components,
            seed=manifest.seed,
            capacities=manifest.capacities,
            temporal_corr=manifest.temporal_corr,
            spatial_corr=manifest.spatial_corr,
        )

    def override(self, **changes: object) -> "ExperimentConfig":
        """Copy with every non-None change applied."""
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    @property
    def dims(self) -> Dims:
        return Dims(self.num_farms, self.num_periods, self.num_obs, self.num_components)

    def resolved_capacities(self) -> np.ndarray:
        if self.capacities is None:
            return np.ones(self.num_farms)
        capacities = np.asarray(self.capacities, dtype=float)
        if capacities.shape != (self.num_farms,):
            raise ContractViolationError(
                f"{capacities.shape[0]} capacities given for {self.num_farms} farms"
            )
        return capacities

    def resolved_data_dir(self) -> Path:
        return get_data_dir(self.data_dir)

    def resolved_out_dir(self) -> Path:
        return Path(self.out_dir) if self.out_dir is not None else self.resolved_data_dir()

    def pipeline_config(self) -> PipelineConfig:
        return dataclasses.replace(
            get_config(), tol=self.tol, max_iter=self.max_iter, mean_mode=self.mean_mode
        ).validate()


def cmd_gen_data(config: ExperimentConfig) -> list[Path]:
    """Generate a synthetic dataset: ``wf_<m>.csv`` per farm plus ``manifest.json``.

    Returns:
        Paths written
    """
    dims = config.dims
    capacities = config.resolved_capacities()
    dataset = synth_generate(dims, capacities, config.temporal_corr, config.spatial_corr, config.seed)
    manifest = DatasetManifest(
        dims, config.seed, tuple(float(c) for c in capacities), config.temporal_corr, config.spatial_corr
    )
    written = write_dataset(dataset, manifest, config.resolved_data_dir())
    print_separator()
    print(f"Generated M={dims.num_farms}, T={dims.num_periods}, I={dims.num_obs} (seed {config.seed})")
    for path in written:
        print(f"  wrote {path}")
    print_separator()
    return written


def _load_experiment(config: ExperimentConfig) -> tuple[FullDataset, Dims]:
    """Dataset from ``data_dir`` with J taken from the config."""
    _, dataset = load_dataset(config.resolved_data_dir())
    dims = dataclasses.replace(dataset.dims, num_components=config.num_components)
    return FullDataset(dims, dataset.slices), dims


def cmd_fit(
    config: ExperimentConfig,
    centralized: bool = False,
    record: Path | None = None,
    replay: Path | None = None,
) -> GmmParams:
    """Fit the GMM and write ``params.txt``, ``iters.csv`` and ``traffic.csv``.

    The distributed fit also writes ``traffic_table.csv`` (farm 1 against the
    centralized baseline). ``centralized`` runs the plaintext oracle instead.

    Args:
        config: Experiment settings
        centralized: Fit on assembled data instead of over the simulated network
        record: Write the protocol transcript here
        replay: Check every message against this recorded transcript

    Returns:
        The fitted parameters
    """
    dataset, dims = _load_experiment(config)
    cfg = config.pipeline_config()
    out_dir = config.resolved_out_dir()
    ensure_dir_exists(out_dir)
    baseline = centralized_traffic(dims)

    print_separator()
    mode = "centralized" if centralized else "distributed"
    print(f"Fitting J={dims.num_components} ({mode}) on M={dims.num_farms}, T={dims.num_periods}, I={dims.num_obs}")

    if centralized:
        init = initialize_params(dims, dataset.capacities, config.seed)
        fit = fit_centralized(assemble(dataset), dims.num_components, init, config=cfg)
        params, traffic = fit.params, baseline
        iters = pd.DataFrame(
            [(k, ll, 0, 0) for k, ll in enumerate(fit.loglik_trace)], columns=ITERS_COLUMNS
        )
    else:
        parties = make_parties(dataset)
        recorded = load_transcript(replay) if replay is not None else None
        capture = "full" if record is not None else "meter"
        bus = Bus.for_parties(parties, capture=capture, replay=recorded)
        fit = fit_distributed(bus, parties, dims.num_components, config.seed, config=cfg)
        if record is not None:
            bus.dump(record)
            print(f"  transcript recorded to {record}")
        if replay is not None:
            bus.finish_replay()
            print(f"  transcript matches {replay}")
        params, traffic = fit.params, fit.traffic
        iters = pd.DataFrame(fit.summaries, columns=ITERS_COLUMNS)
        table = table_one(traffic, baseline)
        table.to_csv(out_dir / "traffic_table.csv", float_format="%.17g", lineterminator="\n")
        print(table.to_string())

    save_params(out_dir / "params.txt", params, dims)
    iters.to_csv(out_dir / "iters.csv", index=False, float_format="%.17g", lineterminator="\n")
    traffic.to_frame().to_csv(out_dir / "traffic.csv", index=False, lineterminator="\n")
    status = "converged" if fit.converged else "stopped at max_iter"
    final = fit.loglik_trace[-1] if fit.loglik_trace else float("nan")
    print(f"  {status} after {fit.n_iter} iterations, log-likelihood {final:.10g}")
    print(f"  wrote {out_dir / 'params.txt'}")
    print_separator()
    return params


def match_components(a: GmmParams, b: GmmParams) -> list[int]:
    """Greedy pairing of ``a``'s components with ``b``'s by mean distance.

    Returns:
        ``perm`` with ``a`` component j matched to ``b`` component ``perm[j]``
    """
    distances = np.linalg.norm(a.means[:, None, :] - b.means[None, :, :], axis=2)
    perm = [-1] * a.num_components
    free_a, free_b = set(range(a.num_components)), set(range(b.num_components))
    while free_a:
        j, k = min(((j, k) for j in free_a for k in free_b), key=lambda jk: distances[jk])
        perm[j] = k
        free_a.remove(j)
        free_b.remove(k)
    return perm


def compare_params(a: GmmParams, b: GmmParams) -> dict[str, tuple[float, tuple[int, ...]]]:
    """Largest element-wise relative difference per field after component matching.

    An element's difference is |a − b| / max(|a|, |b|), with 0/0 read as 0.

    Returns:
        ``{field: (max relative difference, index of the offending element)}``
    """
    if a.dim != b.dim or a.num_components != b.num_components:
        raise ContractViolationError(
            f"cannot compare D={a.dim}, J={a.num_components} with D={b.dim}, J={b.num_components}"
        )
    perm = match_components(a, b)
    report = {}
    for name in ("weights", "means", "covariances"):
        left, right = getattr(a, name), getattr(b, name)[perm]
        scale = np.maximum(np.abs(left), np.abs(right))
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(scale > 0, np.abs(left - right) / scale, 0.0)
        idx = np.unravel_index(int(np.argmax(rel)), rel.shape)
        report[name] = (float(rel[idx]), tuple(int(i) for i in idx))
    return report


def cmd_compare(params_a: Path, params_b: Path, rtol: float = 1e-8) -> int:
    """Compare two parameter files.

    Returns:
        0 if every element agrees within ``rtol``, 1 otherwise

    Raises:
        ContractViolationError: If the files describe different dimensions
    """
    dims_a, a = load_params(params_a)
    dims_b, b = load_params(params_b)
    if (dims_a.num_farms, dims_a.num_periods, dims_a.num_components) != (
        dims_b.num_farms,
        dims_b.num_periods,
        dims_b.num_components,
    ):
        raise ContractViolationError(f"dimension mismatch: {dims_a} vs {dims_b}")
    report = compare_params(a, b)

    print_separator()
    print(f"Comparing {params_a} with {params_b} (rtol {rtol:g})")
    worst = 0.0
    for name, (diff, idx) in report.items():
        flag = "OK" if diff <= rtol else "FAIL"
        print(f"  [{flag}] {name:12s} max rel diff {diff:.3e} at {idx}")
        worst = max(worst, diff)
    print(f"  max diff {worst:.3e}")
    print_separator()
    return EXIT_OK if worst <= rtol else EXIT_MISMATCH


def cmd_forecast(
    config: ExperimentConfig,
    v0: int,
    period: int | None = None,
    targets: Sequence[int] | None = None,
    current: Sequence[float] | None = None,
    row: int = 0,
    params_path: Path | None = None,
    oracle: bool = False,
) -> list[ConditionalGmm]:
    """Private forecast of each target farm at ``period`` given all farms at ``v0``.

    Writes ``forecast_wf_<m>.csv`` per target and ``quantiles.csv``; with ``oracle``
    also ``forecast_oracle_wf_<m>.csv`` from the plaintext conditional.

    Args:
        config: Experiment settings
        v0: Current period (1-based)
        period: Target period (defaults to v0 + 1)
        targets: Target farms (defaults to all)
        current: Current outputs y_{v0} in farm order; otherwise taken from ``row``
        row: Dataset row (0-based) supplying the current outputs
        params_path: Fitted parameters (defaults to ``<out_dir>/params.txt``)
        oracle: Also write the plaintext conditional

    Returns:
        The private forecasts, one per target
    """
    out_dir = config.resolved_out_dir()
    params_path = Path(params_path) if params_path is not None else out_dir / "params.txt"
    dims, params = load_params(params_path)
    _, dataset = load_dataset(config.resolved_data_dir())
    if (dataset.dims.num_farms, dataset.dims.num_periods) != (dims.num_farms, dims.num_periods):
        raise ContractViolationError(f"parameters are for {dims}, data is {dataset.dims}")
    period = v0 + 1 if period is None else period
    targets = list(range(1, dims.num_farms + 1)) if targets is None else list(targets)
    cfg = config.pipeline_config()

    parties = make_parties(dataset)
    for party in parties:
        party.shared["params"] = params
    if current is not None:
        load_current_outputs(parties, current)
    else:
        if not 1 <= v0 <= dims.num_periods:
            raise ContractViolationError(f"v0 must lie in [1, {dims.num_periods}], got {v0}")
        outputs_from_row(parties, row, v0)
    bus = Bus.for_parties(parties, capture="meter")
    ctx = ForecastContext.for_parties(parties, v0, period)
    ensure_dir_exists(out_dir)

    print_separator()
    print(f"Forecasting t={period} from v0={v0} for farms {targets} ({cfg.mean_mode} mean)")
    results = []
    y_v0 = np.array([p.private["y_v0"] for p in parties])
    for farm in targets:
        result = forecast(bus, parties, ctx, farm, config.seed, config=cfg)
        save_forecast_csv(get_forecast_path(out_dir, farm), [result])
        results.append(result)
        print(f"  farm {farm}: w_c={np.round(result.weights, 4)}, mu_c={np.round(result.means, 4)}")
        if oracle:
            plain = conditional_params(params, y_v0, v0, farm, period)
            save_forecast_csv(get_forecast_path(out_dir, farm, oracle=True), [plain])
            diff = max(
                float(np.max(np.abs(result.weights - plain.weights))),
                float(np.max(np.abs(result.means - plain.means))),
                float(np.max(np.abs(result.variances - plain.variances))),
            )
            print(f"    oracle max abs diff {diff:.3e}")
    save_quantiles_csv(out_dir / "quantiles.csv", results, cfg.quantile_levels, cfg.quantile_tol)
    print(f"  traffic: {bus.meter.total_bytes} bytes in {bus.meter.total_messages} messages")
    print_separator()
    return results


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--data-dir", help="directory of the per-farm CSV files")
    common.add_argument("--out-dir", help="directory for outputs (defaults to the data directory)")
    common.add_argument("--seed", type=int)
    common.add_argument("--components", type=int, dest="num_components")
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", type=int)
    common.add_argument("--mean-mode", choices=MEAN_MODES)

    parser = argparse.ArgumentParser(prog="vpgmm", description="Privacy-preserving GMM forecasting experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    gen.add_argument("--farms", type=int, dest="num_farms")
    gen.add_argument("--periods", type=int, dest="num_periods")
    gen.add_argument("--obs", type=int, dest="num_obs")

    fit = sub.add_parser("fit", parents=[common], help="fit the mixture (distributed by default)")
    fit.add_argument("--centralized", action="store_true", help="fit on assembled data instead")
    fit.add_argument("--record", type=Path, help="write the protocol transcript")
    fit.add_argument("--replay", type=Path, help="check messages against a recorded transcript")

    compare = sub.add_parser("compare", parents=[common], help="compare two parameter files")
    compare.add_argument("params_a", type=Path)
    compare.add_argument("params_b", type=Path)
    compare.add_argument("--rtol", type=float, default=1e-8)

    fc = sub.add_parser("forecast", parents=[common], help="private conditional forecast")
    fc.add_argument("--v0", type=int, required=True, help="current period (1-based)")
    fc.add_argument("--t", type=int, dest="period", help="target period (default v0 + 1)")
    fc.add_argument("--targets", type=int, nargs="+", help="target farms (default all)")
    fc.add_argument("--current", help="comma-separated current outputs in farm order")
    fc.add_argument("--row", type=int, default=0, help="dataset row supplying current outputs")
    fc.add_argument("--params", type=Path, dest="params_path")
    fc.add_argument("--oracle", action="store_true", help="also write the plaintext conditional")
    return parser


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the dataset manifest (fit, forecast), then ``--config``, then flags."""
    layers = [ExperimentConfig.read_json(args.config) if args.config else {}, _flag_values(args)]
    config = ExperimentConfig()
    for layer in layers:
        config = config.override(**layer)
    if args.command in ("fit", "forecast"):
        manifest_path = get_manifest_path(config.resolved_data_dir())
        if manifest_path.exists():
            config = ExperimentConfig.from_manifest(read_manifest(manifest_path))
            for layer in layers:
                config = config.override(**layer)
    return config


def _flag_values(args: argparse.Namespace) -> dict[str, object]:
    return dict(
        seed=args.seed,
        num_components=args.num_components,
        tol=args.tol,
        max_iter=args.max_iter,
        mean_mode=args.mean_mode,
        data_dir=args.data_dir,
        out_dir=args.out_dir,
        num_farms=getattr(args, "num_farms", None),
        num_periods=getattr(args, "num_periods", None),
        num_obs=getattr(args, "num_obs", None),
    )


def _parse_current(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as e:
        raise ContractViolationError(f"--current must be comma-separated numbers: {e}") from e


def run(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    logger.info("Running %s with %s", args.command, config)
    if args.command == "gen-data":
        cmd_gen_data(config)
    elif args.command == "fit":
        cmd_fit(config, args.centralized, args.record, args.replay)
    elif args.command == "compare":
        return cmd_compare(args.params_a, args.params_b, args.rtol)
    elif args.command == "forecast":
        cmd_forecast(
            config,
            args.v0,
            args.period,
            args.targets,
            _parse_current(args.current),
            args.row,
            args.params_path,
            args.oracle,
        )
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except (ContractViolationError, DataFormatError, ProtocolError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalDegeneracyError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
