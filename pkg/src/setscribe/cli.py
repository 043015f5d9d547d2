"""Operator command-line surface.

Exit codes: 0 success, 1 user/config error, 2 oracle or embedding
provider failure, 3 internal invariant violation. With ``--json`` every
error is also printed as one JSON object on stderr. Subcommands write
files only inside their ``--out`` directory.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import engine as engine_mod
from . import evaluation, ingest
from .concept_graph import ConceptGraph
from .errors import OracleError, ProviderError, SetscribeError, UserError
from .lexicon import load_lexicon
from .oracle import oracle_from_spec
from .providers import provider_from_spec
from .store import build_store, load_store, save_store
from .verifier import estimate_cost

EXIT_OK = 0
EXIT_USER = 1
EXIT_UPSTREAM = 2
EXIT_INTERNAL = 3


def _common(fn):
    fn = click.option("--seed", type=int, default=0, show_default=True,
                      help="Randomness seed.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(path_type=Path),
                      default=None, help="JSON config file.")(fn)
    fn = click.option("--json", "json_errors", is_flag=True,
                      help="Machine-readable errors on stderr.")(fn)
    return fn


def _load_config(config_path: Path | None, seed: int) -> engine_mod.EngineConfig:
    # precedence: explicit flags > config file > defaults
    fields = {}
    if config_path is not None:
        try:
            fields = json.loads(config_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UserError(f"cannot read config {config_path}: {exc}") from None
    fields["seed"] = seed
    return engine_mod.EngineConfig.from_json(fields)


def _out_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(payload: dict) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


@click.group()
def main():
    """Describe large image sets through verified concept graphs."""


@main.command("estimate-cost")
@click.option("--n", "n", type=int, required=True, help="Number of images.")
@click.option("--c", "c", type=int, required=True, help="Label examples per verification.")
@click.option("--d", "d", type=int, default=1280, show_default=True, help="Embedding dim.")
@click.option("--flops", type=float, required=True, help="Throughput in FLOP/s.")
@click.option("--rate", type=float, default=12.0, show_default=True, help="Images/s for embedding.")
@_common
def estimate_cost_cmd(n, c, d, flops, rate, seed, config_path, json_errors):
    """Predict embedding and per-iteration kNN wall time."""
    est = estimate_cost(n, c, d, flops, rate)
    _emit({"embed_seconds": est.embed_seconds, "knn_seconds": est.knn_seconds})


@main.command("lexicon-audit")
@click.option("--lexicon", "lexicon_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Directory for the audit report.")
@_common
def lexicon_audit_cmd(lexicon_path, out, seed, config_path, json_errors):
    """Count intersection roots among non-leaf lexicon nodes."""
    lex = load_lexicon(lexicon_path)
    report = lex.intersection_audit()
    report["synsets"] = len(lex)
    if out:
        (_out_dir(out) / "lexicon_audit.json").write_text(
            json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    _emit(report)


@main.command("graph-stats")
@click.option("--graph", "graph_path", type=click.Path(path_type=Path), required=True,
              help="Graph JSON or trace JSONL file.")
@_common
def graph_stats_cmd(graph_path, seed, config_path, json_errors):
    """Node count and depth of a stored concept graph."""
    graph = _read_graph(graph_path)
    stats = graph.stats()
    _emit({"num_nodes": stats.num_nodes, "depth": stats.depth})


def _read_graph(path: Path) -> ConceptGraph:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UserError(f"cannot read {path}: {exc}") from None
    first = text.lstrip().split("\n", 1)[0]
    try:
        obj = json.loads(first)
    except json.JSONDecodeError as exc:
        raise UserError(f"{path} is neither graph JSON nor a trace: {exc}") from None
    if obj.get("type") == "header":  # trace file: use the result line
        for line in reversed(text.strip().split("\n")):
            parsed = json.loads(line)
            if parsed.get("type") == "result":
                return ConceptGraph.from_json(parsed["graph"])
        raise UserError(f"trace {path} has no result line yet")
    return ConceptGraph.from_json(json.loads(text))


@main.command("embed-set")
@click.option("--ids-file", type=click.Path(path_type=Path), default=None,
              help="Text file with one image id/path per line.")
@click.option("--images-dir", type=click.Path(path_type=Path), default=None,
              help="Directory whose files become the set, sorted by name.")
@click.option("--provider", "provider_spec", default="http", show_default=True,
              help="hash[:dim] or http[:url].")
@click.option("--kind", type=click.Choice(["image", "text"]), default="image",
              show_default=True)
@click.option("--batch", type=int, default=64, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@_common
def embed_set_cmd(ids_file, images_dir, provider_spec, kind, batch, out,
                  seed, config_path, json_errors):
    """Precompute the embedding store for an image set."""
    if (ids_file is None) == (images_dir is None):
        raise UserError("pass exactly one of --ids-file or --images-dir")
    if ids_file:
        ids = [ln.strip() for ln in ids_file.read_text(encoding="utf-8").splitlines()
               if ln.strip()]
    else:
        ids = sorted(str(p) for p in images_dir.iterdir() if p.is_file())
    provider = provider_from_spec(provider_spec)
    store = build_store(ids, provider, batch=batch, kind=kind)
    path = _out_dir(out) / "store.is2t"
    save_store(store, path)
    _emit({"store": str(path), "count": store.count, "dim": store.dim,
           "checksum": store.checksum})


@main.command("describe")
@click.option("--store", "store_path", type=click.Path(path_type=Path), required=True)
@click.option("--lexicon", "lexicon_path", type=click.Path(path_type=Path), required=True)
@click.option("--oracle", "oracle_spec", required=True, help="scripted:<fixture> or http.")
@click.option("--provider", "provider_spec", default=None,
              help="Term embedder; defaults to hash:<store dim>.")
@click.option("--ids-file", type=click.Path(path_type=Path), default=None,
              help="Subset of store ids to describe (default: all).")
@click.option("--resume", "resume_flag", is_flag=True,
              help="Continue from an existing trace in --out.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@_common
def describe_cmd(store_path, lexicon_path, oracle_spec, provider_spec, ids_file,
                 resume_flag, out, seed, config_path, json_errors):
    """Run the full iterative description loop."""
    store = load_store(store_path)
    lex = load_lexicon(lexicon_path)
    oracle = oracle_from_spec(oracle_spec)
    cfg = _load_config(config_path, seed)
    embedder = provider_from_spec(provider_spec or f"hash:{store.dim}")
    if ids_file:
        ids = [ln.strip() for ln in ids_file.read_text(encoding="utf-8").splitlines()
               if ln.strip()]
    else:
        ids = list(store.ids)
    out = _out_dir(out)
    trace_path = out / "trace.jsonl"
    if resume_flag:
        result = engine_mod.resume(trace_path, ids, store, oracle, lex, cfg, embedder)
    else:
        result = engine_mod.describe(ids, store, oracle, lex, cfg, embedder,
                                     trace_path=trace_path)
    (out / "description.txt").write_text(result.description, encoding="utf-8")
    (out / "graph.json").write_text(
        json.dumps(result.graph.to_json(), indent=2, sort_keys=True), encoding="utf-8")
    stats = result.graph.stats()
    _emit({
        "description": result.description,
        "stop_reason": result.stop_reason,
        "iterations": result.T,
        "num_nodes": stats.num_nodes,
        "depth": stats.depth,
        "trace": str(trace_path),
    })


@main.command("captionize")
@click.option("--description", "description_path", type=click.Path(path_type=Path),
              required=True)
@click.option("--oracle", "oracle_spec", required=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@_common
def captionize_cmd(description_path, oracle_spec, out, seed, config_path, json_errors):
    """Condense a description into a single-sentence caption."""
    description = description_path.read_text(encoding="utf-8").strip()
    if not description:
        raise UserError(f"description file {description_path} is empty")
    oracle = oracle_from_spec(oracle_spec)
    caption = oracle.captionize(description)
    if out:
        (_out_dir(out) / "caption.txt").write_text(caption, encoding="utf-8")
    _emit({"caption": caption})


@main.command("diff")
@click.option("--render-a", type=click.Path(path_type=Path), required=True,
              help="Network-text render of set A.")
@click.option("--render-b", type=click.Path(path_type=Path), required=True)
@click.option("--store-a", type=click.Path(path_type=Path), required=True)
@click.option("--store-b", type=click.Path(path_type=Path), required=True)
@click.option("--oracle", "oracle_spec", required=True)
@click.option("--provider", "provider_spec", default=None)
@click.option("--ground-truth", default=None, help="Reference difference for acc@k.")
@click.option("--pair-id", default="pair", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@_common
def diff_cmd(render_a, render_b, store_a, store_b, oracle_spec, provider_spec,
             ground_truth, pair_id, out, seed, config_path, json_errors):
    """Propose and rank differences between two described sets."""
    a = load_store(store_a)
    b = load_store(store_b)
    oracle = oracle_from_spec(oracle_spec)
    provider = provider_from_spec(provider_spec or f"hash:{a.dim}")
    proposals = evaluation.propose(
        render_a.read_text(encoding="utf-8"), render_b.read_text(encoding="utf-8"), oracle
    )
    ranked = evaluation.rank(proposals, a, b, provider)
    report = {
        "pair_id": pair_id,
        "proposals": [{"text": p.text, "round": p.round, "score": p.score}
                      for p in ranked.proposals],
        "scores": [p.score for p in ranked.proposals],
    }
    if ground_truth:
        report["acc1"] = evaluation.acc_at_k(ranked, ground_truth, 1, oracle)
        report["acc5"] = evaluation.acc_at_k(ranked, ground_truth, 5, oracle)
        top1 = ranked.proposals[0].text
        report["rouge"] = evaluation.rouge_l(top1, ground_truth)
        report["clipscore"] = evaluation.clip_score(top1, a, provider)
    if out:
        (_out_dir(out) / "diff_report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    _emit(report)


@main.command("ingest-groups")
@click.option("--metadata", type=click.Path(path_type=Path), required=True,
              help="CSV or JSONL metadata file.")
@click.option("--source", type=click.Choice(["caption", "wikiart"]), required=True)
@click.option("--exclude", "exclude_path", type=click.Path(path_type=Path), default=None,
              help="File with one excluded caption per line (manual curation).")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@_common
def ingest_groups_cmd(metadata, source, exclude_path, out, seed, config_path, json_errors):
    """Build benchmark group specs from dataset metadata."""
    records = _read_records(metadata)
    exclusions = []
    if exclude_path:
        exclusions = [ln.strip() for ln in
                      exclude_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if source == "caption":
        for rec in records:
            rec["available"] = str(rec.get("available", "")).lower() in ("1", "true", "yes")
        groups = ingest.group_by_caption(records, exclusions)
    else:
        groups = ingest.group_wikiart(records, exclusions)
    out = _out_dir(out)
    group_dir = out / "groups"
    group_dir.mkdir(exist_ok=True)
    manifest = []
    for i, group in enumerate(groups):
        path = group_dir / f"group_{i:04d}.json"
        path.write_text(json.dumps(group.to_json(), indent=2, sort_keys=True),
                        encoding="utf-8")
        manifest.append({"caption": group.caption, "size": len(group.member_ids),
                         "file": path.name})
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    _emit({"groups": len(groups), "manifest": str(out / "manifest.json")})


def _read_records(path: Path) -> list[dict]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UserError(f"cannot read metadata {path}: {exc}") from None
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        return [json.loads(ln) for ln in text.splitlines() if ln.strip()]
    return list(csv.DictReader(text.splitlines()))


def run(argv: list[str] | None = None) -> int:
    """Invoke the CLI and map exceptions onto the exit-code contract."""
    json_errors = "--json" in (argv or sys.argv[1:])

    def report(code: int, kind: str, message: str) -> int:
        if json_errors:
            click.echo(json.dumps({"error": kind, "message": message}), err=True)
        else:
            click.echo(f"error: {message}", err=True)
        return code

    try:
        main.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        if not json_errors:
            exc.show()
            return EXIT_USER
        return report(EXIT_USER, "usage", exc.format_message())
    except click.exceptions.Abort:
        return EXIT_USER
    except UserError as exc:
        return report(EXIT_USER, "user", str(exc))
    except (OracleError, ProviderError) as exc:
        return report(EXIT_UPSTREAM, "upstream", str(exc))
    except SetscribeError as exc:
        return report(EXIT_INTERNAL, "internal", str(exc))


def entrypoint() -> None:
    sys.exit(run())
