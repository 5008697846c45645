"""Command-line front end: ingest, propose, embed, index, search, train-head,
eval, serve, run.

Artifacts flow through the documented file formats: the candidate/index file
(``SPOTIDX1``, dim 0 until embedded), the vector exchange file
(``SPOTVEC1``), the head JSON, run files as JSON lines, and report JSON.
`spotlight run` chains the batch steps and produces the same report as
running them one at a time.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import embed as embed_mod
from . import evalkit, pipeline, proposals, simhead
from .corpus import BoundingBox, load_collection
from .embed import Embedder, EmbedderConfig
from .index import build_index, index_from_candidates, load_index
from .postproc import UnionConfig
from .service import ENV_CONFIG, EngineConfig, serve as serve_engine


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _parse_box(raw: str) -> BoundingBox:
    parts = [int(p) for p in raw.split(",")]
    if len(parts) != 4:
        raise click.BadParameter("box must be x,y,w,h")
    return BoundingBox(*parts)


@click.group()
def main():
    """Document-image retrieval and pattern spotting."""


@main.command()
@click.argument("manifest", type=click.Path())
def ingest(manifest):
    """Validate a corpus manifest and report its contents."""
    try:
        collection = load_collection(manifest)
    except Exception as exc:
        _fail(str(exc))
    gt_total = sum(len(v) for v in collection.ground_truth.by_category.values())
    click.echo(f"corpus {collection.name}: {len(collection.docs)} documents, "
               f"{len(collection.queries)} queries, "
               f"{len(collection.ground_truth.by_category)} categories, "
               f"{gt_total} ground-truth boxes")


def _ss_config(block, offset, k, components, min_box, max_candidates,
               color_spaces, no_threshold) -> proposals.SelectiveSearchConfig:
    return proposals.SelectiveSearchConfig(
        block=block, offset=offset,
        k_values=tuple(float(x) for x in k.split(",")),
        similarity_components=tuple(components.split(",")),
        min_box=min_box, max_candidates_per_doc=max_candidates,
        color_spaces=tuple(color_spaces.split(",")),
        use_threshold=not no_threshold)


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--block", default=241, show_default=True)
@click.option("--offset", default=0.12, show_default=True)
@click.option("--k", default="50,100", show_default=True,
              help="comma-separated segmentation scales")
@click.option("--components", default="color,texture,fill,size", show_default=True)
@click.option("--min-box", default=8, show_default=True)
@click.option("--max-candidates", default=10000, show_default=True)
@click.option("--color-spaces", default="gray", show_default=True)
@click.option("--no-threshold", is_flag=True, help="skip adaptive thresholding")
@click.option("--workers", default=1, show_default=True)
def propose(corpus_path, out_path, block, offset, k, components, min_box,
            max_candidates, color_spaces, no_threshold, workers):
    """Generate candidate regions for every page."""
    try:
        collection = load_collection(corpus_path)
        cfg = _ss_config(block, offset, k, components, min_box, max_candidates,
                         color_spaces, no_threshold)
        candidates = pipeline.propose_all(collection, cfg, workers=workers)
        build_index(candidates, out_path)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"{len(candidates)} candidates from {len(collection.docs)} "
               f"documents -> {out_path}")


@main.command(name="embed")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--candidates", "cand_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--dim", default=256, show_default=True)
@click.option("--reduction", default="pca", show_default=True,
              type=click.Choice(["pca", "seeded-random-projection", "none"]))
@click.option("--resize", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--sample-cap", default=50000, show_default=True,
              help="max descriptors sampled for the PCA fit")
def embed_cmd(corpus_path, cand_path, out_path, dim, reduction, resize, seed,
              sample_cap):
    """Embed candidates with the baseline descriptor and write the index."""
    try:
        collection = load_collection(corpus_path)
        candidates = load_index(cand_path).candidates()
        config = EmbedderConfig(kind="baseline", target_dim=dim,
                                reduction=reduction, resize=resize, seed=seed)
        embedder = pipeline.fit_embedder(collection, candidates, config,
                                         sample_cap=sample_cap, seed=seed)
        pipeline.embed_all(collection, candidates, embedder)
        build_index(candidates, out_path)
        embedder.save(out_path)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"embedded {len(candidates)} candidates at dim {dim} -> {out_path}")


@main.command(name="index")
@click.option("--candidates", "cand_path", required=True, type=click.Path())
@click.option("--vectors", "vec_path", required=True, type=click.Path())
@click.option("--dim", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def index_cmd(cand_path, vec_path, dim, out_path):
    """Build an index from candidates plus externally computed vectors."""
    try:
        candidates = load_index(cand_path).candidates()
        known = {str(c.cand_id) for c in candidates}
        vectors = embed_mod.import_vectors(vec_path, dim, known_ids=known)
        pipeline.attach_vectors(candidates, vectors)
        build_index(candidates, out_path)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"indexed {len(candidates)} candidates at dim {dim} -> {out_path}")


@main.command(name="import-vectors")
@click.option("--candidates", "cand_path", required=True, type=click.Path())
@click.option("--vectors", "vec_path", required=True, type=click.Path())
@click.option("--dim", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def import_vectors_cmd(ctx, cand_path, vec_path, dim, out_path):
    """Alias of `spotlight index` for the external-vector workflow."""
    ctx.invoke(index_cmd, cand_path=cand_path, vec_path=vec_path, dim=dim,
               out_path=out_path)


@main.command(name="export-vectors")
@click.option("--index", "index_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def export_vectors_cmd(index_path, out_path):
    """Dump an index's vectors to the exchange format."""
    try:
        idx = load_index(index_path)
        if idx.vectors is None:
            _fail("index holds no vectors")
        mapping = {str(int(idx.ids[i])): idx.vectors[i] for i in range(idx.count)}
        embed_mod.export_vectors(out_path, mapping)
    except SystemExit:
        raise
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"exported {idx.count} vectors (dim {idx.dim}) -> {out_path}")


def _search_settings(mode, k, metric, head_path, postprocess, retain, emit,
                     merge_iou, workers) -> pipeline.SearchSettings:
    head = simhead.SimilarityHead.load(head_path) if head_path else None
    if metric == "learned-head" and head is None:
        raise click.BadParameter("--metric learned-head requires --head")
    post = UnionConfig(retain=retain, emit=emit, merge_iou=merge_iou) \
        if postprocess else None
    return pipeline.SearchSettings(mode=mode, top_k=k, metric=metric, head=head,
                                   postprocess=post, workers=workers)


@main.command()
@click.option("--index", "index_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--query-id", default=None, help="run one named corpus query")
@click.option("--doc", "doc_id", default=None, help="ad-hoc query document")
@click.option("--box", default=None, help="ad-hoc query box x,y,w,h")
@click.option("--all-queries", is_flag=True, help="run every corpus query")
@click.option("--mode", default="ps", type=click.Choice(["ps", "ir"]),
              show_default=True)
@click.option("--k", default=10, show_default=True)
@click.option("--metric", default="cosine", show_default=True,
              type=click.Choice(["cosine", "euclidean", "learned-head"]))
@click.option("--head", "head_path", default=None, type=click.Path())
@click.option("--postprocess", is_flag=True, help="apply union post-processing")
@click.option("--retain", default=2000, show_default=True)
@click.option("--emit", default=1000, show_default=True)
@click.option("--merge-iou", default=0.2, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="write hits as a JSON-lines run file")
def search(index_path, corpus_path, query_id, doc_id, box, all_queries, mode, k,
           metric, head_path, postprocess, retain, emit, merge_iou, workers,
           out_path):
    """Run ranked searches against a built index."""
    try:
        collection = load_collection(corpus_path)
        idx = load_index(index_path)
        embedder = Embedder.load(index_path) \
            if Path(str(index_path) + ".embedder.json").exists() else None
        settings = _search_settings(mode, k, metric, head_path, postprocess,
                                    retain, emit, merge_iou, workers)

        if all_queries:
            if embedder is None:
                _fail("no embedder sidecar next to the index; cannot embed queries")
            runs = pipeline.search_queries(collection, idx, embedder, settings)
        else:
            if query_id:
                matches = [q for q in collection.queries if q.query_id == query_id]
                if not matches:
                    _fail(f"unknown query id {query_id!r}")
                query = matches[0]
                qdoc, qbox, qid = query.source_doc, query.box, query.query_id
            elif doc_id and box:
                qdoc, qbox, qid = doc_id, _parse_box(box), f"{doc_id}:{box}"
            else:
                _fail("pass --all-queries, --query-id, or --doc with --box")
            if embedder is None:
                _fail("no embedder sidecar next to the index; cannot embed queries")
            from .corpus import crop
            vec = embedder.embed_patch(crop(collection.doc(qdoc), qbox))
            runs = {qid: pipeline.run_query(idx, vec.values, settings)}
    except SystemExit:
        raise
    except Exception as exc:
        _fail(str(exc))

    if out_path:
        evalkit.save_run(out_path, runs)
        total = sum(len(v) for v in runs.values())
        click.echo(f"{len(runs)} query run(s), {total} hits -> {out_path}")
    else:
        for qid in sorted(runs):
            click.echo(f"query {qid}")
            for hit in runs[qid]:
                click.echo(f"  {hit.rank:>4}  {hit.doc_id:<16} "
                           f"{hit.box.to_list()}  {hit.score:.6f}")


@main.command(name="train-head")
@click.option("--pairs", "pairs_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--epochs", default=300, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--gamma", default=0.999, show_default=True)
@click.option("--distance", default="euclidean", show_default=True,
              type=click.Choice(["euclidean", "cosine"]))
def train_head_cmd(pairs_path, out_path, lr, epochs, seed, gamma, distance):
    """Train the sigmoid similarity head on a labeled pair file."""
    try:
        pairs = simhead.PairSet.load(pairs_path)
        head = simhead.train_head(pairs, simhead.DISTANCES[distance], lr0=lr,
                                  epochs=epochs, seed=seed, gamma=gamma)
        head.save(out_path)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"trained head on {len(pairs)} pairs: w={head.w:.4f} "
               f"b={head.b:.4f} -> {out_path}")


@main.command(name="eval")
@click.option("--run", "run_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--task", default="ps", type=click.Choice(["ps", "ir"]),
              show_default=True)
@click.option("--iou", "iou_threshold", default=0.5, show_default=True)
@click.option("--k", default=1000, show_default=True)
@click.option("--ignore-junk", is_flag=True)
@click.option("--min-samples", default=1, show_default=True)
@click.option("--json", "json_path", default=None, type=click.Path())
def eval_cmd(run_path, corpus_path, task, iou_threshold, k, ignore_junk,
             min_samples, json_path):
    """Score a run file against the corpus ground truth."""
    try:
        collection = load_collection(corpus_path)
        runs = evalkit.load_run(run_path)
        protocol = evalkit.EvalProtocol(task=task, top_k=k,
                                        iou_threshold=iou_threshold,
                                        ignore_junk=ignore_junk,
                                        min_samples_per_class=min_samples)
        report = evalkit.evaluate_run(runs, collection.queries,
                                      collection.ground_truth, protocol)
    except Exception as exc:
        _fail(str(exc))
    click.echo(report.to_text())
    if json_path:
        Path(json_path).write_text(report.to_json())
        click.echo(f"report -> {json_path}")


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(),
              help=f"engine config JSON (default: ${ENV_CONFIG})")
@click.option("--port", default=None, type=int, help="override configured port")
def serve(config_path, port):
    """Start the HTTP query service."""
    try:
        cfg = EngineConfig.from_json(config_path) if config_path \
            else EngineConfig.from_env()
        if port is not None:
            cfg.port = port
        serve_engine(cfg)
    except Exception as exc:
        _fail(str(exc))


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--workdir", required=True, type=click.Path())
@click.option("--block", default=241, show_default=True)
@click.option("--offset", default=0.12, show_default=True)
@click.option("--k", default="50,100", show_default=True)
@click.option("--components", default="color,texture,fill,size", show_default=True)
@click.option("--min-box", default=8, show_default=True)
@click.option("--max-candidates", default=10000, show_default=True)
@click.option("--color-spaces", default="gray", show_default=True)
@click.option("--no-threshold", is_flag=True)
@click.option("--dim", default=256, show_default=True)
@click.option("--reduction", default="pca", show_default=True,
              type=click.Choice(["pca", "seeded-random-projection", "none"]))
@click.option("--resize", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--sample-cap", default=50000, show_default=True)
@click.option("--mode", default="ps", type=click.Choice(["ps", "ir"]),
              show_default=True)
@click.option("--search-k", default=10, show_default=True)
@click.option("--metric", default="cosine", show_default=True,
              type=click.Choice(["cosine", "euclidean"]))
@click.option("--postprocess", is_flag=True)
@click.option("--retain", default=2000, show_default=True)
@click.option("--emit", default=1000, show_default=True)
@click.option("--merge-iou", default=0.2, show_default=True)
@click.option("--eval-iou", default=0.5, show_default=True)
@click.option("--ignore-junk", is_flag=True)
@click.option("--min-samples", default=1, show_default=True)
@click.option("--workers", default=1, show_default=True)
def run(corpus_path, workdir, block, offset, k, components, min_box,
        max_candidates, color_spaces, no_threshold, dim, reduction, resize,
        seed, sample_cap, mode, search_k, metric, postprocess, retain, emit,
        merge_iou, eval_iou, ignore_junk, min_samples, workers):
    """End-to-end: propose, embed, index, search every query, evaluate."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    try:
        collection = load_collection(corpus_path)
        cfg = _ss_config(block, offset, k, components, min_box, max_candidates,
                         color_spaces, no_threshold)
        candidates = pipeline.propose_all(collection, cfg, workers=workers)
        build_index(candidates, workdir / "candidates.spotidx")

        config = EmbedderConfig(kind="baseline", target_dim=dim,
                                reduction=reduction, resize=resize, seed=seed)
        embedder = pipeline.fit_embedder(collection, candidates, config,
                                         sample_cap=sample_cap, seed=seed)
        pipeline.embed_all(collection, candidates, embedder)
        index_path = workdir / "index.spotidx"
        build_index(candidates, index_path)
        embedder.save(index_path)

        idx = index_from_candidates(candidates)
        post = UnionConfig(retain=retain, emit=emit, merge_iou=merge_iou) \
            if postprocess else None
        settings = pipeline.SearchSettings(mode=mode, top_k=search_k,
                                           metric=metric, postprocess=post,
                                           workers=workers)
        runs = pipeline.search_queries(collection, idx, embedder, settings)
        evalkit.save_run(workdir / "run.jsonl", runs)

        protocol = evalkit.EvalProtocol(task=mode, top_k=search_k,
                                        iou_threshold=eval_iou,
                                        ignore_junk=ignore_junk,
                                        min_samples_per_class=min_samples)
        report = evalkit.evaluate_run(runs, collection.queries,
                                      collection.ground_truth, protocol)
        (workdir / "report.json").write_text(report.to_json())
    except Exception as exc:
        _fail(str(exc))
    click.echo(report.to_text())
    click.echo(f"artifacts in {workdir}")


if __name__ == "__main__":
    main()
