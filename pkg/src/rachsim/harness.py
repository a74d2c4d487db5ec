"""Experiment orchestration: validated configs, seeded trials, KPI export.

A run is trials x episodes x frames.  Every trial owns freshly derived rng
streams, its own simulator and its own controller, so trials are independent
and a (config, seed) pair reproduces output files byte for byte.
"""
import csv
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimators
from .control import (
    ActionGrid,
    CpclController,
    DqnController,
    EstimatorAcbController,
    GenieAcbController,
    SlFormulaController,
    TabularQController,
    SCHEMES,
    genie_acb,
)
from .neural import load_network, save_network
from .predictor import DnnCorrector, LstmBacklogPredictor, observation_features, pretrain_dnn
from .rng import RngStream, derive_seed
from .sim import ControlAction, Simulator
from .traffic import ArrivalProcess, TrafficProfile

OPTIMIZERS = (
    "genie",
    "DA",
    "MoM_idle",
    "MoM_full",
    "MLE",
    "SL_formula",
    "tabularQ",
    "DQN",
    "CPCL",
)

FRAME_HEADER = (
    "trial,episode,frame,scheme,optimizer,p_acb,bo_window,channels,idle,success,"
    "collision,arrivals,true_backlog,predicted_backlog,label_backlog,drops,"
    "transmissions,reward"
).split(",")
EPISODE_HEADER = (
    "trial,episode,successes,access_success_prob,mean_delay,transmissions,drops,pred_mae"
).split(",")

# rng stream ids within a trial
STREAM_SIM = 0
STREAM_TRAFFIC = 1
STREAM_CONTROL = 2

_LABEL_COL = FRAME_HEADER.index("label_backlog")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


_TRAFFIC_KEYS = {"kind", "total_per_period", "period", "alpha", "beta", "deterministic"}
_TOP_KEYS = {
    "scheme",
    "optimizer",
    "channels",
    "limit",
    "traffic",
    "episode_length",
    "episodes",
    "seed",
    "trials",
    "hyper",
}
_HYPER_KEYS = {
    "acb_levels",
    "bo_levels",
    "channel_levels",
    "default_backoff",
    "label_source",
    "lstm_hidden",
    "window",
    "n_cap",
    "lr",
    "replay_batch",
    "replay_horizon",
    "hidden",
    "gamma",
    "batch_size",
    "buffer_capacity",
    "target_refresh",
    "eps_start",
    "eps_floor",
    "eps_decay",
    "alpha",
    "bucket_width",
    "da_beta",
    "da_lambda",
    "search_max",
    "mle_search_max",
    "corrector_checkpoint",
    "predictor_checkpoint",
    "agent_checkpoints",
    "dqn_checkpoint",
    "dataset_frames",
    "epochs",
    "holdout_fraction",
}


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "ACB"
    optimizer: str = "genie"
    channels: int = 54
    limit: int = 10
    traffic: TrafficProfile = field(default_factory=TrafficProfile)
    episode_length: int = 100
    episodes: int = 10
    seed: int = 12345
    trials: int = 1
    hyper: dict = field(default_factory=dict)

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme: unknown value {self.scheme!r}, expected one of {SCHEMES}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(
                f"optimizer: unknown value {self.optimizer!r}, expected one of {OPTIMIZERS}"
            )
        for name in ("channels", "limit", "episode_length", "episodes", "trials", "seed"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{name}: expected an integer, got {value!r}")
        for name in ("channels", "limit", "episode_length", "episodes", "trials"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed: must be >= 0")
        if not isinstance(self.hyper, dict):
            raise ConfigError("hyper: expected a JSON object")
        unknown = set(self.hyper) - _HYPER_KEYS
        if unknown:
            raise ConfigError(f"hyper.{sorted(unknown)[0]}: unknown hyperparameter")
        if self.scheme == "ACB" and "bo_levels" in self.hyper:
            raise ConfigError(
                "hyper.bo_levels: back-off window is not controllable under the ACB scheme"
            )
        if self.scheme != "DRA" and "channel_levels" in self.hyper:
            raise ConfigError(
                "hyper.channel_levels: channel control requires the DRA scheme"
            )
        if "label_source" in self.hyper and self.hyper["label_source"] not in (
            estimators.MOM_IDLE,
            estimators.MOM_FULL,
            estimators.MLE,
        ):
            raise ConfigError(f"hyper.label_source: unknown value {self.hyper['label_source']!r}")
        return self

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown configuration key")
        kwargs = dict(doc)
        if "traffic" in kwargs:
            tdoc = kwargs["traffic"]
            if not isinstance(tdoc, dict):
                raise ConfigError("traffic: expected a JSON object")
            bad = set(tdoc) - _TRAFFIC_KEYS
            if bad:
                raise ConfigError(f"traffic.{sorted(bad)[0]}: unknown key")
            try:
                kwargs["traffic"] = TrafficProfile(**tdoc)
            except ValueError as exc:
                raise ConfigError(f"traffic: {exc}") from exc
        config = cls(**kwargs)
        return config.validate()

    def to_dict(self):
        t = self.traffic
        return {
            "scheme": self.scheme,
            "optimizer": self.optimizer,
            "channels": self.channels,
            "limit": self.limit,
            "traffic": {
                "kind": t.kind,
                "total_per_period": t.total_per_period,
                "period": t.period,
                "alpha": t.alpha,
                "beta": t.beta,
                "deterministic": t.deterministic,
            },
            "episode_length": self.episode_length,
            "episodes": self.episodes,
            "seed": self.seed,
            "trials": self.trials,
            "hyper": dict(self.hyper),
        }


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}") from exc
    if overrides:
        doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


@dataclass
class EpisodeMetrics:
    trial: int
    episode: int
    successes: int
    access_success_prob: float
    mean_delay: float
    transmissions: int
    drops: int
    pred_mae: float


def _action_grid(config):
    hyper = config.hyper
    kwargs = {}
    if "acb_levels" in hyper:
        kwargs["acb_levels"] = tuple(hyper["acb_levels"])
    if "bo_levels" in hyper:
        kwargs["bo_levels"] = tuple(hyper["bo_levels"])
    if "channel_levels" in hyper:
        kwargs["channel_levels"] = tuple(hyper["channel_levels"])
    return ActionGrid(**kwargs)


def _agent_kwargs(hyper):
    out = {}
    for key, target in (
        ("hidden", "hidden"),
        ("lr", "lr"),
        ("gamma", "gamma"),
        ("batch_size", "batch_size"),
        ("buffer_capacity", "buffer_capacity"),
        ("target_refresh", "target_refresh"),
        ("eps_start", "eps_start"),
        ("eps_floor", "eps_floor"),
        ("eps_decay", "eps_decay"),
    ):
        if key in hyper:
            out[target] = tuple(hyper[key]) if key == "hidden" else hyper[key]
    return out


def _predictor_kwargs(hyper):
    out = {}
    for key, target in (
        ("lstm_hidden", "hidden"),
        ("window", "window"),
        ("n_cap", "n_cap"),
        ("lr", "lr"),
        ("replay_batch", "replay_batch"),
        ("replay_horizon", "replay_horizon"),
    ):
        if key in hyper:
            out[target] = hyper[key]
    return out


def build_controller(config, rng):
    """Construct the optimizer named by the config, seeded by ``rng``."""
    hyper = config.hyper
    grid = _action_grid(config)
    backoff = hyper.get("default_backoff", 0)
    name = config.optimizer
    if name == "genie":
        return GenieAcbController(config.scheme, config.channels, backoff, grid)
    if name in ("DA", "MoM_idle", "MoM_full", "MLE"):
        da_lambda = hyper.get(
            "da_lambda", config.traffic.total_per_period / config.traffic.period
        )
        return EstimatorAcbController(
            name,
            config.scheme,
            config.channels,
            backoff,
            grid,
            search_max=hyper.get("search_max"),
            mle_search_max=hyper.get("mle_search_max", 300),
            da_beta=hyper.get("da_beta", 2.39),
            da_lambda=da_lambda,
        )
    if name == "SL_formula":
        predictor = None
        if "predictor_checkpoint" in hyper:
            predictor = LstmBacklogPredictor(
                channels=config.channels, rng=rng,
                net=load_network(hyper["predictor_checkpoint"]),
                **_predictor_kwargs(hyper),
            )
        return SlFormulaController(
            config.scheme,
            config.channels,
            rng,
            backoff,
            grid,
            label_source=hyper.get("label_source", estimators.MOM_FULL),
            predictor=predictor,
            **({} if predictor else _predictor_kwargs(hyper)),
        )
    if name == "tabularQ":
        return TabularQController(
            config.scheme,
            config.channels,
            rng,
            grid,
            backoff,
            alpha=hyper.get("alpha", 0.1),
            gamma=hyper.get("gamma", 0.9),
            bucket_width=hyper.get("bucket_width"),
            eps_start=hyper.get("eps_start", 1.0),
            eps_floor=hyper.get("eps_floor", 0.05),
            eps_decay=hyper.get("eps_decay", 0.999),
            search_max=hyper.get("search_max"),
        )
    if name == "DQN":
        return DqnController(
            config.scheme,
            config.channels,
            rng,
            grid,
            backoff,
            window=hyper.get("window", 10),
            checkpoint=hyper.get("dqn_checkpoint"),
            **_agent_kwargs(hyper),
        )
    if name == "CPCL":
        corrector = None
        if "corrector_checkpoint" in hyper:
            corrector = DnnCorrector(net=load_network(hyper["corrector_checkpoint"]))
        predictor = None
        if "predictor_checkpoint" in hyper:
            predictor = LstmBacklogPredictor(
                channels=config.channels, rng=rng,
                net=load_network(hyper["predictor_checkpoint"]),
                **_predictor_kwargs(hyper),
            )
        return CpclController(
            config.scheme,
            config.channels,
            rng,
            grid,
            backoff,
            corrector=corrector,
            predictor=predictor,
            agent_checkpoints=hyper.get("agent_checkpoints"),
            n_cap=hyper.get("n_cap"),
            predictor_kwargs=_predictor_kwargs(hyper) if predictor is None else None,
            **_agent_kwargs(hyper),
        )
    raise ConfigError(f"optimizer: unknown value {name!r}")


def run_trial(config, trial):
    """One seeded trial; returns (frame rows, per-episode metrics)."""
    rows, metrics, _ = run_trial_keep_controller(config, trial)
    return rows, metrics


def run_trial_keep_controller(config, trial):
    trial_seed = derive_seed(config.seed, trial)
    sim = Simulator(config.limit, RngStream(trial_seed, STREAM_SIM))
    arrivals = ArrivalProcess(config.traffic, RngStream(trial_seed, STREAM_TRAFFIC))
    controller = build_controller(config, RngStream(trial_seed, STREAM_CONTROL))

    rows = []
    metrics = []
    for episode in range(config.episodes):
        sim.reset()
        arrivals.reset()
        controller.begin_episode()
        if controller.last_label is not None and rows:
            rows[-1][_LABEL_COL] = controller.last_label
        ep_successes = 0
        ep_delay_total = 0
        ep_arrivals = 0
        ep_transmissions = 0
        ep_drops = 0
        ep_abs_err = 0.0
        ep_pred_frames = 0
        for t in range(config.episode_length):
            n_arr = arrivals.arrivals_at(t)
            action = controller.act(t, true_backlog=sim.backlog_size + n_arr)
            if controller.last_label is not None and rows:
                rows[-1][_LABEL_COL] = controller.last_label
            report = sim.step(action, n_arr)
            controller.observe(report)
            obs = report.observation
            pred = controller.last_prediction
            rows.append(
                [
                    trial,
                    episode,
                    t,
                    config.scheme,
                    config.optimizer,
                    action.acb_factor,
                    action.backoff_window,
                    action.num_channels,
                    obs.idle,
                    obs.success,
                    obs.collision,
                    n_arr,
                    report.true_backlog,
                    pred,
                    None,
                    report.drops,
                    report.transmissions,
                    obs.success,
                ]
            )
            ep_successes += obs.success
            ep_delay_total += sum(d for _, d, _ in report.successes)
            ep_arrivals += n_arr
            ep_transmissions += report.transmissions
            ep_drops += report.drops
            if pred is not None:
                ep_abs_err += abs(pred - report.true_backlog)
                ep_pred_frames += 1
        metrics.append(
            EpisodeMetrics(
                trial=trial,
                episode=episode,
                successes=ep_successes,
                access_success_prob=(ep_successes / ep_arrivals) if ep_arrivals else 1.0,
                mean_delay=(ep_delay_total / ep_successes) if ep_successes else None,
                transmissions=ep_transmissions,
                drops=ep_drops,
                pred_mae=(ep_abs_err / ep_pred_frames) if ep_pred_frames else None,
            )
        )
    return rows, metrics, controller


def _run_trial_packed(args):
    doc, trial = args
    return run_trial(ExperimentConfig.from_dict(doc), trial)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    frame_rows: list
    episodes: list
    summary: dict


def run_experiment(config, out_dir=None, workers=1):
    """Run trials x episodes x frames; optionally write the CSV/JSON outputs.

    Results are reduced in trial order whatever the pool's completion order,
    so the output is independent of ``workers``.
    """
    config.validate()
    if workers > 1:
        import multiprocessing

        doc = config.to_dict()
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            per_trial = pool.map(_run_trial_packed, [(doc, t) for t in range(config.trials)])
    else:
        per_trial = [run_trial(config, t) for t in range(config.trials)]

    frame_rows = []
    episodes = []
    for rows, metrics in per_trial:
        frame_rows.extend(rows)
        episodes.extend(metrics)
    summary = summarize(config, episodes)
    result = ExperimentResult(config, frame_rows, episodes, summary)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_frame_csv(os.path.join(out_dir, "frames.csv"), frame_rows)
        write_episode_csv(os.path.join(out_dir, "episodes.csv"), episodes)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result


def summarize(config, episodes):
    per_trial = []
    for trial in range(config.trials):
        eps = [m for m in episodes if m.trial == trial]
        per_trial.append(
            {
                "trial": trial,
                "mean_successes": float(np.mean([m.successes for m in eps])),
                "mean_access_success_prob": float(np.mean([m.access_success_prob for m in eps])),
                "total_drops": int(sum(m.drops for m in eps)),
                "total_transmissions": int(sum(m.transmissions for m in eps)),
            }
        )
    trial_means = [t["mean_successes"] for t in per_trial]
    return {
        "scheme": config.scheme,
        "optimizer": config.optimizer,
        "trials": config.trials,
        "episodes": config.episodes,
        "episode_length": config.episode_length,
        "successes_mean": float(np.mean(trial_means)),
        "successes_std": float(np.std(trial_means)),
        "per_trial": per_trial,
    }


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_frame_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FRAME_HEADER)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_episode_csv(path, episodes):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EPISODE_HEADER)
        for m in episodes:
            writer.writerow(
                [
                    _cell(m.trial),
                    _cell(m.episode),
                    _cell(m.successes),
                    _cell(m.access_success_prob),
                    _cell(m.mean_delay),
                    _cell(m.transmissions),
                    _cell(m.drops),
                    _cell(m.pred_mae),
                ]
            )


# --- comparison and convergence ---------------------------------------------


def _t_critical(df, two_sided=True):
    from scipy.stats import t

    return float(t.ppf(0.975 if two_sided else 0.95, df))


def compare(configs, workers=1):
    """Run >= 2 configs sharing scheme/traffic and report paired statistics.

    Episodes pair by (trial, episode); each entry gets the per-episode mean
    and a 95% CI of its paired success difference against the first config.
    """
    if len(configs) < 2:
        raise ConfigError("compare: needs at least 2 configs")
    base = configs[0]
    for other in configs[1:]:
        if other.scheme != base.scheme:
            raise ConfigError("scheme: compared configs must share a scheme")
        if other.traffic != base.traffic:
            raise ConfigError("traffic: compared configs must share a traffic profile")
        if (other.trials, other.episodes) != (base.trials, base.episodes):
            raise ConfigError("trials: compared configs must share trials and episodes")
    results = [run_experiment(c, workers=workers) for c in configs]
    series = [np.array([m.successes for m in r.episodes], dtype=float) for r in results]
    labels = [f"{c.optimizer}/{c.scheme}" for c in configs]
    report = {"labels": labels, "mean_successes": [float(s.mean()) for s in series], "pairs": []}
    for i in range(1, len(series)):
        diff = series[0] - series[i]
        n = len(diff)
        se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        tcrit = _t_critical(n - 1) if n > 1 else 0.0
        report["pairs"].append(
            {
                "baseline": labels[0],
                "other": labels[i],
                "mean_diff": float(diff.mean()),
                "ci95_low": float(diff.mean() - tcrit * se),
                "ci95_high": float(diff.mean() + tcrit * se),
                "n": n,
            }
        )
    return report


def episode_reward_curve(episodes):
    """Per-episode success counts averaged across trials."""
    by_episode = {}
    for m in episodes:
        by_episode.setdefault(m.episode, []).append(m.successes)
    return [float(np.mean(by_episode[e])) for e in sorted(by_episode)]


def curve_from_episode_csv(path):
    by_episode = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_episode.setdefault(int(row["episode"]), []).append(float(row["successes"]))
    return [float(np.mean(by_episode[e])) for e in sorted(by_episode)]


def convergence_report(curve, tolerance=0.05, window=10):
    """First episode whose forward-window mean is and stays within
    ``tolerance`` (relative) of the final-window mean.

    The curve is declared not converged when the only qualifying start lies
    inside the final two windows, i.e. there is no sustained plateau.
    """
    curve = list(curve)
    if len(curve) < 10:
        raise ValueError("convergence_report: need at least 10 episodes")
    window = min(window, max(1, len(curve) // 2))
    final_mean = float(np.mean(curve[-window:]))
    scale = max(abs(final_mean), 1e-12)
    starts = range(len(curve) - window + 1)
    within = [abs(float(np.mean(curve[s : s + window])) - final_mean) <= tolerance * scale for s in starts]
    converged_at = None
    for s in starts:
        if all(within[s:]):
            converged_at = s + 1  # 1-based episodes
            break
    not_converged_floor = len(curve) - 2 * window + 1
    converged = converged_at is not None and converged_at <= not_converged_floor
    return {
        "converged": bool(converged),
        "episode": converged_at if converged else None,
        "episode_or_cap": converged_at if converged else len(curve),
        "window": window,
        "tolerance": tolerance,
        "final_mean": final_mean,
    }


# --- offline pretraining -----------------------------------------------------


def corrector_dataset(config, n_frames, seed_offset=1_000_003):
    """Simulate (observation, true backlog) pairs for offline training.

    Episodes cycle through scaled copies of the configured traffic so the
    dataset spans empty through overloaded regimes.  The driving policy is
    the formula rule perturbed by a few grid steps, which covers ACB levels
    around the closed-loop trajectory without destroying the informativeness
    of the resulting observations.
    """
    pre_seed = derive_seed(config.seed, seed_offset)
    sim = Simulator(config.limit, RngStream(pre_seed, STREAM_SIM))
    rng = RngStream(pre_seed, STREAM_CONTROL)
    grid = _action_grid(config)
    levels = grid.acb_levels
    backoff = config.hyper.get("default_backoff", 0)
    scales = (0.25, 0.5, 0.75, 1.0, 1.25)
    observations = []
    targets = []
    frames_done = 0
    episode = 0
    while frames_done < n_frames:
        scale = scales[episode % len(scales)]
        profile = replace(
            config.traffic, total_per_period=int(config.traffic.total_per_period * scale)
        )
        arrivals = ArrivalProcess(profile, RngStream(pre_seed, STREAM_TRAFFIC + episode))
        sim.reset()
        for t in range(config.episode_length):
            n_arr = arrivals.arrivals_at(t)
            backlog_now = sim.backlog_size + n_arr
            p_formula = min(1.0, config.channels / max(backlog_now, 1.0))
            idx = min(range(len(levels)), key=lambda i: abs(levels[i] - p_formula))
            if rng.random() < 0.3:
                idx = max(0, min(len(levels) - 1, idx + rng.randbelow(7) - 3))
            report = sim.step(ControlAction(levels[idx], backoff, config.channels), n_arr)
            observations.append(report.observation)
            targets.append(float(report.true_backlog))
            frames_done += 1
            if frames_done >= n_frames:
                break
        episode += 1
    return observations, targets


def pretrain(config, target, out_dir, workers=1):
    """Offline training entry point; writes RACHNN1 checkpoints plus a
    training-curve CSV and returns a report dict."""
    config.validate()
    os.makedirs(out_dir, exist_ok=True)
    if target == "dnn_corrector":
        return _pretrain_corrector(config, out_dir)
    if target == "dqn_agent":
        return _pretrain_agents(config, out_dir)
    raise ConfigError(f"target: unknown value {target!r}, expected dnn_corrector or dqn_agent")


def _pretrain_corrector(config, out_dir):
    hyper = config.hyper
    n_frames = hyper.get("dataset_frames", 40_000)
    epochs = hyper.get("epochs", 60)
    holdout_fraction = hyper.get("holdout_fraction", 0.1)
    if n_frames < hyper.get("batch_size", 64):
        raise ConfigError("dataset_frames: smaller than one training batch")
    observations, targets = corrector_dataset(config, n_frames)
    feats = np.stack([observation_features(o) for o in observations])
    y = np.array(targets)

    shuffle_rng = RngStream(derive_seed(config.seed, 2_000_003))
    order = list(range(len(y)))
    shuffle_rng.shuffle(order)
    n_holdout = max(1, int(len(y) * holdout_fraction))
    hold, train = order[:n_holdout], order[n_holdout:]

    net_rng = RngStream(derive_seed(config.seed, 3_000_003))
    net, curve = pretrain_dnn(
        feats[train], y[train],
        epochs=epochs,
        batch_size=hyper.get("batch_size", 64),
        lr=hyper.get("lr", 1e-3),
        rng=net_rng,
    )
    corrector = DnnCorrector(net=net)
    pred = np.array([corrector.estimate_features(feats[i]) for i in hold])
    holdout_mae = float(np.mean(np.abs(pred - y[hold])))
    from .estimators import mom_full

    mom_vals = np.array([mom_full(observations[i], 10 * config.channels).value for i in hold])
    mom_mae = float(np.mean(np.abs(mom_vals - y[hold])))

    path = os.path.join(out_dir, "corrector.rachnn")
    save_network(net, path)
    curve_path = os.path.join(out_dir, "corrector_curve.csv")
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_mse"])
        for i, v in enumerate(curve):
            writer.writerow([i, repr(float(v))])
    report = {
        "target": "dnn_corrector",
        "checkpoint": path,
        "curve": curve_path,
        "dataset_frames": n_frames,
        "holdout_frames": n_holdout,
        "holdout_mae": holdout_mae,
        "mom_full_mae": mom_mae,
        "final_train_mse": float(curve[-1]),
    }
    with open(os.path.join(out_dir, "pretrain_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _pretrain_agents(config, out_dir):
    if config.optimizer not in ("DQN", "CPCL"):
        raise ConfigError("optimizer: dqn_agent pretraining needs optimizer DQN or CPCL")
    if config.trials != 1:
        raise ConfigError("trials: dqn_agent pretraining produces one checkpoint, use trials=1")
    _, metrics, controller = run_trial_keep_controller(config, 0)
    curve = episode_reward_curve(metrics)
    curve_path = os.path.join(out_dir, "training_curve.csv")
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "mean_successes"])
        for i, v in enumerate(curve):
            writer.writerow([i, repr(float(v))])
    paths = {}
    if config.optimizer == "DQN":
        path = os.path.join(out_dir, "dqn.rachnn")
        save_network(controller.agent.net, path)
        paths["dqn_checkpoint"] = path
    else:
        agent_paths = []
        for (name, _), agent in zip(controller.variables, controller.agents):
            path = os.path.join(out_dir, f"cpcl_agent_{name}.rachnn")
            save_network(agent.net, path)
            agent_paths.append(path)
        paths["agent_checkpoints"] = agent_paths
        predictor_path = os.path.join(out_dir, "cpcl_predictor.rachnn")
        save_network(controller.predictor.net, predictor_path)
        paths["predictor_checkpoint"] = predictor_path
    report = {
        "target": "dqn_agent",
        "optimizer": config.optimizer,
        "curve": curve_path,
        "final_window_mean": float(np.mean(curve[-min(10, len(curve)) :])),
        **paths,
    }
    with open(os.path.join(out_dir, "pretrain_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
