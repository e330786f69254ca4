"""Command-line entry point (``faasbench``).

Exit codes: 0 success, 1 partial failure (failed cells, stuck resources,
interrupted runs), 2 invalid configuration or arguments.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import sys
import time
from decimal import Decimal
from pathlib import Path

import click
import yaml

from faasbench import analyzer, store as st
from faasbench.injector import ProbePlan, StressPlan, run_probe, run_stress, shortfall
from faasbench.model import DeploymentState, ProfileError, dump_profiles, load_config, profiles_from_config
from faasbench.orchestrator import (
    CLOCKS,
    Campaign,
    CampaignError,
    ProgressEvent,
    build_adapters,
    cleanup,
    deploy_campaign,
    restore,
    run_campaign,
)
from faasbench.pricing import PlanError, cost_table

logger = logging.getLogger("faasbench")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
_UNITS = {"ms": 1e-3, "s": 1.0, "m": 60.0, "h": 3600.0}


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


def parse_duration(text: str) -> float:
    """``"5s"``, ``"250ms"``, ``"2m"`` or a bare number of seconds."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*(ms|s|m|h)?\s*", str(text))
    if not m:
        raise click.BadParameter(f"not a duration: {text!r}")
    return float(m.group(1)) * _UNITS[m.group(2) or "s"]


def parse_rates(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"rates must be comma-separated numbers: {text!r}") from None


class Ctx:
    def __init__(self, config_path, seed, store_dir, clock):
        self.config_path = config_path
        self.seed = seed
        self.store = st.Store(store_dir)
        self.clock = clock
        try:
            self.config = load_config(config_path)
            self.profiles = profiles_from_config(self.config)
        except (ProfileError, OSError) as exc:
            raise ConfigError(str(exc)) from exc

    def campaign(self, **overrides) -> Campaign:
        if "campaign" not in self.config and "run_id" not in overrides:
            raise ConfigError("no campaign: pass --config with a campaign section")
        if self.seed is not None:
            overrides.setdefault("seed", self.seed)
        try:
            return Campaign.from_config(self.config, overrides)
        except CampaignError as exc:
            raise ConfigError(str(exc)) from exc

    def adapters(self, campaign: Campaign):
        try:
            return build_adapters(campaign, self.profiles, self.clock)
        except (CampaignError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


def _progress(ev: ProgressEvent) -> None:
    tail = f" ({ev.detail})" if ev.detail else ""
    click.echo(f"  {ev.cell}: {ev.state}{tail}", err=True)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override the campaign seed.")
@click.option("--store", "store_dir", default="faasbench-store", show_default=True,
              type=click.Path(file_okay=False), help="Result store directory.")
@click.option("--clock", type=click.Choice(CLOCKS), default="virtual", show_default=True,
              help="Simulator clock: virtual (instant, deterministic) or wall (real HTTP).")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx, config_path, seed, store_dir, clock, verbose):
    """Benchmark FaaS providers: deploy, run, analyze, price."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    ctx.obj = Ctx(config_path, seed, store_dir, clock)


# -- lifecycle -------------------------------------------------------------------


@main.command()
@click.option("--run-id", default=None, help="Override campaign.run_id.")
@click.pass_obj
def deploy(obj: Ctx, run_id):
    """Deploy every campaign cell and record the deployments in the store."""
    campaign = obj.campaign(run_id=run_id)
    adapters = obj.adapters(campaign)
    if obj.store.exists(campaign.run_id):
        raise ConfigError(f"run {campaign.run_id!r} already exists in {obj.store.root}")
    deps = deploy_campaign(campaign, adapters, _progress, profiles=obj.profiles)
    obj.store.create_run(campaign.run_id, {"mode": campaign.mode.value})
    obj.store.update_meta(campaign.run_id, status="deployed", deployments=[d.to_dict() for d in deps])
    failed = [d for d in deps if d.state is DeploymentState.FAILED]
    click.echo(f"{len(deps) - len(failed)}/{len(deps)} deployments ready for run {campaign.run_id}")
    for d in failed:
        click.echo(f"FAILED {d.id}: {d.params.get('error', '')}")
    sys.exit(EXIT_PARTIAL if failed else EXIT_OK)


@main.command()
@click.option("--run-id", default=None, help="Override campaign.run_id.")
@click.option("--mode", type=click.Choice(["probe", "stress", "coldstart"]), default=None)
@click.option("--cleanup/--no-cleanup", "do_cleanup", default=True, show_default=True,
              help="Remove deployments after the run.")
@click.pass_obj
def run(obj: Ctx, run_id, mode, do_cleanup):
    """Run the campaign (deploying first if needed); resumes partial runs."""
    campaign = obj.campaign(run_id=run_id, mode=mode)
    adapters = obj.adapters(campaign)
    try:
        recorded = obj.store.meta(campaign.run_id).info.get("deployments") if obj.store.exists(campaign.run_id) else None
        if recorded:
            deps = restore(recorded, adapters)
        else:
            deps = deploy_campaign(campaign, adapters, _progress, profiles=obj.profiles)
        try:
            outcome = run_campaign(campaign, adapters, obj.store, deps, _progress)
        except st.StoreError as exc:
            raise ConfigError(str(exc)) from exc
        report = None
        if do_cleanup:
            report = cleanup(deps, adapters, _progress)
            obj.store.update_meta(campaign.run_id, deployments=[d.to_dict() for d in deps])
    finally:
        for a in adapters.values():
            a.close()
    click.echo(f"run {outcome.run_id}: {outcome.status}, {outcome.samples} points written")
    for cell in outcome.failed_cells:
        click.echo(f"FAILED cell {cell}")
    bad = outcome.status != "complete" or (report is not None and not report.ok)
    if report is not None:
        for dep_id, why in report.failed.items():
            click.echo(f"could not remove {dep_id}: {why}")
    sys.exit(EXIT_PARTIAL if bad else EXIT_OK)


@main.command()
@click.option("--run-id", default=None, help="Run whose deployments to remove.")
@click.pass_obj
def clean(obj: Ctx, run_id):
    """Remove every deployment recorded for a run; safe to repeat."""
    campaign = obj.campaign(run_id=run_id)
    if not obj.store.exists(campaign.run_id):
        click.echo(f"nothing recorded for run {campaign.run_id}")
        sys.exit(EXIT_OK)
    recorded = obj.store.meta(campaign.run_id).info.get("deployments", [])
    adapters = obj.adapters(campaign)
    try:
        deps = restore(recorded, adapters)
        live = [d for d in deps if d.state is DeploymentState.READY]
        report = cleanup(live, adapters, _progress)
        leftovers = {name: a.census() for name, a in adapters.items()}
    finally:
        for a in adapters.values():
            a.close()
    obj.store.update_meta(campaign.run_id, deployments=[d.to_dict() for d in deps])
    click.echo(f"removed {len(report.removed)} deployment(s)")
    for dep_id, why in report.failed.items():
        click.echo(f"could not remove {dep_id}: {why}")
    logger.info("provider census after cleanup: %s", leftovers)
    sys.exit(EXIT_OK if report.ok else EXIT_PARTIAL)


# -- inspection ----------------------------------------------------------------


@main.command()
@click.option("--format", "fmt", type=click.Choice(["table", "yaml"]), default="table", show_default=True)
@click.pass_obj
def profiles(obj: Ctx, fmt):
    """Show provider profiles (built in, plus config overrides)."""
    if fmt == "yaml":
        click.echo(dump_profiles(obj.profiles), nl=False)
        return
    rows = []
    for p in obj.profiles:
        cold = p.cold_start_ms["default"]
        rows.append([p.name, p.max_instances, p.instance_cap, f"{p.memory_min_mb}-{p.memory_max_mb}",
                     p.scaling_law.value, cold.mean_ms, f"{p.idle_recycle_s[0]:g}-{p.idle_recycle_s[1]:g}"])
    click.echo(analyzer.format_table(
        ["provider", "max_inst", "eff_cap", "memory_mb", "scaling", "cold_ms", "recycle_s"], rows))


@main.command()
@click.option("--plan", "plan_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML with optional 'defaults' and a 'rows' list.")
@click.option("--provider", "providers", multiple=True,
              help="Only these providers (repeatable). With no --plan, names the single plan's provider.")
@click.option("--invocations", type=int, default=None)
@click.option("--exec-ms", type=int, default=None)
@click.option("--memory", type=int, default=None, help="Allocated memory in MB.")
@click.option("--used-memory", type=int, default=None)
@click.option("--payload-bytes", type=int, default=0)
@click.option("--format", "fmt", type=click.Choice(["table", "csv", "json-lines"]), default="table",
              show_default=True)
@click.pass_obj
def cost(obj: Ctx, plan_path, providers, invocations, exec_ms, memory, used_memory, payload_bytes, fmt):
    """Monthly cost per provider for one or more workload plans."""
    if plan_path:
        data = yaml.safe_load(Path(plan_path).read_text()) or {}
        defaults = data.get("defaults") or {}
        rows = [{**defaults, **r} for r in data.get("rows") or []]
        if providers:
            rows = [r for r in rows if r.get("provider") in providers]
    elif providers and invocations is not None and exec_ms is not None and memory:
        rows = [{"provider": name, "invocations_per_month": invocations, "exec_time_ms": exec_ms,
                 "memory_mb": memory, "memory_used_mb": used_memory or memory,
                 "payload_bytes_per_call": payload_bytes} for name in providers]
    else:
        raise ConfigError("give --plan FILE or --provider/--invocations/--exec-ms/--memory")
    try:
        table = cost_table(obj.profiles, rows)
    except (PlanError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad plan: {exc}") from exc
    keys = ["provider", "memory_mb", "exec_time_ms", "invocation", "gb_second",
            "ghz_second", "bandwidth", "total"]
    values = [[r[k] for k in keys] for r in table]
    if fmt == "csv":
        w = csv.writer(sys.stdout)
        w.writerow(keys)
        w.writerows(values)
    elif fmt == "json-lines":
        for row in values:
            click.echo(json.dumps({k: str(v) if isinstance(v, Decimal) else v for k, v in zip(keys, row)}))
    else:
        click.echo(analyzer.format_table(keys, [[str(v) for v in row] for row in values]))


@main.command()
@click.argument("kind", type=click.Choice(["coldstart", "scaling", "saturation", "instances"]))
@click.option("--run", "run_id", required=True)
@click.option("--method", type=click.Choice(["instance-id", "cold-flag", "latency-outlier"]),
              default="instance-id", show_default=True)
@click.option("--k", type=float, default=analyzer.DEFAULT_OUTLIER_K, show_default=True,
              help="IQR multiplier for latency-outlier detection.")
@click.option("--csv", "csv_out", type=click.Path(dir_okay=False), default=None, help="Also write CSV here.")
@click.option("--save/--no-save", default=True, show_default=True, help="Store report points in the run.")
@click.pass_obj
def analyze(obj: Ctx, kind, run_id, method, k, csv_out, save):
    """Derive cold-start, scaling, saturation or instance reports from a run."""
    s = obj.store
    if not s.exists(run_id):
        raise ConfigError(f"no run {run_id!r} in {s.root}")
    try:
        headers, rows, points = _analyze(s, kind, run_id, method, k)
    except analyzer.AnalysisError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PARTIAL)
    click.echo(analyzer.format_table(headers, rows))
    if csv_out:
        with open(csv_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(headers)
            w.writerows(rows)
    if save and points and kind != "instances":
        s.append(run_id, points)


def _group_samples(points):
    groups: dict[tuple, list] = {}
    for p in points:
        key = tuple(p.tags.get(t, "") for t in ("provider", "region", "runtime", "memory_mb", "deployment"))
        groups.setdefault(key, []).append(st.point_to_sample(p))
    return groups


def _analyze(s: st.Store, kind, run_id, method, k):
    samples = s.query(run_id, st.SAMPLE)
    if kind == "coldstart":
        headers = ["provider", "region", "runtime", "memory_mb", "cold", "warm", "warm_ms",
                   "overhead_mean", "q1", "median", "q3"]
        rows, points = [], []
        for key, group in sorted(_group_samples(samples).items()):
            labeled = analyzer.detect_cold_starts(group, method, k)
            tags = dict(zip(("provider", "region", "runtime", "memory_mb", "deployment"), key))
            rep = analyzer.cold_overhead(labeled, method, {**tags, "run_id": run_id})
            o = rep.overhead_ms
            rows.append([*key[:4], rep.cold_count, rep.warm_count, rep.warm_mean_ms, o.mean, o.q1, o.median, o.q3])
            points += rep.to_points()
        return headers, rows, points
    if kind == "scaling":
        by_prov: dict[tuple, dict[int, list[float]]] = {}
        for key, group in _group_samples(samples).items():
            labeled = analyzer.detect_cold_starts(group, "instance-id") if all(
                x.instance_id for x in group if x.ok) else [analyzer.Labeled(x, False) for x in group if x.ok]
            times = [x.sample.exec_ns / 1e6 for x in labeled if not x.cold and x.sample.exec_ns is not None]
            if times:
                by_prov.setdefault((key[0], key[2]), {}).setdefault(int(key[3]), []).extend(times)
        headers = ["provider", "runtime", "memory_mb", "n", "mean_ms", "stddev_ms", "ratio_to_2x"]
        rows, points = [], []
        for (prov, rt), by_mem in sorted(by_prov.items()):
            table = analyzer.scaling_table(by_mem)
            rows += [[prov, rt, r.memory_mb, r.count, r.mean_ms, r.stddev_ms, r.doubling_ratio] for r in table]
            points += analyzer.scaling_points(table, {"provider": prov, "runtime": rt, "run_id": run_id})
        if not rows:
            raise analyzer.AnalysisError("no execution times recorded in this run")
        return headers, rows, points
    if kind == "saturation":
        results = [{"rate": p.fields["rate"], "achieved_rps": p.fields["achieved_rps"],
                    "provider": p.tags.get("provider", ""), "runtime": p.tags.get("runtime", "")}
                   for p in s.query(run_id, "stress")]
        if not results:
            raise analyzer.AnalysisError("no stress results in this run")
        table = analyzer.saturation_table(results)
        headers = ["provider", "runtime", "goal_rps", "achieved_rps", "percent"]
        rows = [[r.provider, r.runtime, r.goal_rps, r.achieved_rps, r.percent] for r in table]
        return headers, rows, analyzer.saturation_points(table, {"run_id": run_id})
    trace_points = s.query(run_id, "instances")
    trace = analyzer.instance_trace(trace_points)
    return ["time_s", "instances"], [[t / 1e9, n] for t, n in trace], []


@main.command()
@click.option("--run", "run_id", required=True)
@click.option("--export", "fmt", type=click.Choice(["csv", "lp", "plot"]), default="csv", show_default=True)
@click.option("--measurement", default=None, help="Only this measurement (default: all).")
@click.option("--kind", type=click.Choice(["scatter", "curve"]), default="scatter", show_default=True,
              help="Plot layout for --export plot.")
@click.option("--out", type=click.Path(dir_okay=False), default="-", show_default=True)
@click.pass_obj
def report(obj: Ctx, run_id, fmt, measurement, kind, out):
    """Export a run's points as CSV, line protocol or gnuplot columns."""
    if not obj.store.exists(run_id):
        raise ConfigError(f"no run {run_id!r} in {obj.store.root}")
    pts = obj.store.points(run_id)
    if measurement:
        pts = [p for p in pts if p.measurement == measurement]
    elif fmt == "plot":
        pts = [p for p in pts if p.measurement == ("stress" if kind == "curve" else st.SAMPLE)]
    text = {"csv": st.export_csv, "lp": st.export_lp}.get(fmt, lambda p: st.export_plot(p, kind))(pts)
    with click.open_file(out, "w") as fh:
        fh.write(text)
    meta = obj.store.meta(run_id)
    if meta.status != "complete":
        click.echo(f"note: run {run_id} is {meta.status}", err=True)


@main.command("import")
@click.argument("lp_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--run", "run_id", required=True, help="Run to create and fill.")
@click.pass_obj
def import_(obj: Ctx, lp_file, run_id):
    """Load a line-protocol export into a new run."""
    try:
        pts = st.import_lp(Path(lp_file).read_text())
    except (st.PointError, ValueError) as exc:
        raise ConfigError(f"{lp_file}: {exc}") from exc
    obj.store.create_run(run_id, {"imported_from": str(lp_file)})
    n = obj.store.append(run_id, pts)
    obj.store.update_meta(run_id, status="complete")
    click.echo(f"imported {n} points into {run_id}")


# -- direct injection against URLs ----------------------------------------------


def _read_targets(path: str) -> list[str]:
    text = Path(path).read_text()
    if path.endswith((".yaml", ".yml")):
        data = yaml.safe_load(text) or []
        return list(data.get("targets", []) if isinstance(data, dict) else data)
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def _maybe_store(obj: Ctx, run_id, tags, samples, extra=()):
    if not run_id:
        return
    obj.store.create_run(run_id, {"tags": tags}, exist_ok=True)
    obj.store.append(run_id, [st.sample_to_point(x, tags) for x in samples] + list(extra))
    obj.store.update_meta(run_id, status="complete")


@main.command()
@click.option("--targets", "targets_file", required=True, type=click.Path(exists=True, dir_okay=False),
              help="File with one URL per line (or a YAML list).")
@click.option("--interval", default="5s", show_default=True)
@click.option("--samples", type=int, default=100, show_default=True)
@click.option("--timeout", default="30s", show_default=True)
@click.option("--run-id", default=None, help="Store samples under this run.")
@click.pass_obj
def probe(obj: Ctx, targets_file, interval, samples, timeout, run_id):
    """Send one request per target every interval and report latency."""
    targets = _read_targets(targets_file)
    try:
        plan = ProbePlan(targets, parse_duration(interval), samples, parse_duration(timeout))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    results = run_probe(plan)
    rows = []
    for name, r in results.items():
        summ = r.histogram.summary()
        errs = len(r.samples) - r.histogram.total
        rows.append([name, len(r.samples), errs] + [summ.get(q, 0) / 1e6 for q in ("p50", "p90", "p99")])
        _maybe_store(obj, run_id, {"target": name, "mode": "probe"}, r.samples)
    click.echo(analyzer.format_table(["target", "samples", "errors", "p50_ms", "p90_ms", "p99_ms"], rows))


@main.command()
@click.option("--target", required=True, help="URL to load.")
@click.option("--rates", default="10,25,50,100,200,400,800,1000", show_default=True)
@click.option("--duration", default="60s", show_default=True, help="Per rate.")
@click.option("--connections", type=int, default=None, help="Pool size (default 2 x rate x 1 s).")
@click.option("--drain-gap", default="60s", show_default=True)
@click.option("--timeout", default="30s", show_default=True)
@click.option("--run-id", default=None, help="Store samples and summaries under this run.")
@click.pass_obj
def bench(obj: Ctx, target, rates, duration, connections, drain_gap, timeout, run_id):
    """Open-loop constant-rate load against one URL."""
    try:
        plan = StressPlan(target, parse_rates(rates), parse_duration(duration), connections,
                          parse_duration(drain_gap), parse_duration(timeout))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    tags = {"target": target, "mode": "stress"}

    def on_rate(res):
        summ = res.histogram.summary()
        sf = shortfall(res.rate, res.achieved_rps)
        flag = " LONG-TAIL" if sf.long_tail else ""
        click.echo(f"rate {res.rate:g}/s: achieved {res.achieved_rps:.2f}/s ({sf.percent:.2f}%){flag} "
                   f"p50 {summ.get('p50', 0) / 1e6:.2f} ms p99 {summ.get('p99', 0) / 1e6:.2f} ms "
                   f"errors {dict(res.errors)}")
        fields = {k: v for k, v in res.summary().items()}
        fields["rate"], fields["achieved_rps"] = float(res.rate), float(res.achieved_rps)
        summary = st.Point("stress", {**tags, "rate": f"{res.rate:g}"}, fields, res.start_ns)
        _maybe_store(obj, run_id, tags, res.samples, [summary])

    t0 = time.monotonic()
    run_stress(plan, on_rate)
    logger.info("bench finished in %.1f s", time.monotonic() - t0)


# -- servers ------------------------------------------------------------------------


@main.group()
def serve():
    """Run local HTTP endpoints."""


@serve.command("functions")
@click.option("--bind", default="127.0.0.1:8080", show_default=True)
@click.option("--custom-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory of custom handlers served at /custom/<name>.")
def serve_functions(bind, custom_dir):
    """Serve the benchmark workloads (/fact, /matrix, /netlatency, /diskio)."""
    from faasbench.simfaas.http import parse_bind
    from faasbench.workloads import functions
    from faasbench.workloads.server import serve_workloads
    if custom_dir:
        for name in functions.load_custom_dir(custom_dir):
            click.echo(f"custom function {name}")
    host, port = parse_bind(bind)
    srv = serve_workloads(host, port)
    click.echo(f"functions at {srv.url}")
    _wait(srv)


@serve.command("sim")
@click.option("--bind", default="127.0.0.1:8081", show_default=True)
@click.pass_obj
def serve_sim(obj: Ctx, bind):
    """Serve the configured campaign's deployments from the simulator."""
    campaign = obj.campaign()
    adapters = build_adapters(campaign, obj.profiles, "virtual")
    from faasbench.simfaas.http import deployment_url, serve_http
    servers = []
    for name, adapter in adapters.items():
        if not hasattr(adapter, "sim"):
            continue
        for cell in campaign.cells(obj.profiles):
            if cell.provider == name:
                adapter.deploy(campaign.deployment(cell))
        srv = serve_http(adapter.sim, bind if not servers else f"{bind.rpartition(':')[0]}:0")
        servers.append(srv)
        for d in adapter.list():
            click.echo(f"{deployment_url(srv, d.id)}")
        click.echo(f"admin: {srv.url}/_admin/instances")
    _wait(*servers)


def _wait(*servers):
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        for s in servers:
            s.stop()


if __name__ == "__main__":
    main()
