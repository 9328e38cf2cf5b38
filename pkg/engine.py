#!/usr/bin/env python3
"""CLI for the desk-scale RAG engine.

A thin wrapper around `rag_engine` and `rag_fl`.

Examples (zsh):
  python3 engine.py ingest --corpus data/corpus.jsonl --store /tmp/store --dim 64 --features 4096 --seed 7
  python3 engine.py query --store /tmp/store --config data/rag.json "what color is item001"
  python3 engine.py train --mode generator --dataset data/train.jsonl --store /tmp/store --out /tmp/ralt --epochs 20
  python3 engine.py benchmark --store /tmp/store --checkpoint /tmp/ralt --benchmark data/benchmark.jsonl --num-examples 3

Federated run (two shells):
  python3 engine.py fl-server --store /tmp/store --mode generator --rounds 3 --clients 1 --listen 127.0.0.1:7070 --out /tmp/fl
  python3 engine.py fl-client --store /tmp/store --mode generator --dataset data/train.jsonl --server 127.0.0.1:7070

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from rag_engine.content import ingest_corpus, load_corpus, load_rag_config, load_train_dataset
from rag_engine.engine import RAGSystem, rag_query
from rag_engine.errors import DimensionMismatch, MissingTrainer, RagEngineError
from rag_engine.evals import Benchmarker, ExactMatchEvaluationMetric, build_fewshot_prefix, load_benchmark
from rag_engine.generator import build_vocab, init_generator, load_vocab
from rag_engine.models import AGG_MODES, KL_DIRECTIONS, MODEL_ROLES, GenerationConfig, RAGConfig, TrainConfig
from rag_engine.params import PARAMS_FILE, extract_parameters, load_models, load_parameters, save_checkpoint
from rag_engine.retriever import init_retriever, overlap_retriever
from rag_engine.store import KnowledgeStore
from rag_engine.trainers import RAGTrainerManager, build_trainer
from rag_fl.models import FLTask, parse_address

logger = logging.getLogger("rag_engine.cli")

MODEL_DIR = "model"
TRAIN_LOG = "train_log.jsonl"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default="WARNING",
                   help="Logging level for messages on stderr.")


def _add_system(p: argparse.ArgumentParser) -> None:
    p.add_argument("--store", required=True, help="Knowledge store directory.")
    p.add_argument("--checkpoint", default="",
                   help="Directory with params.bin + vocab.json (default: <store>/model).")
    p.add_argument("--config", default="", help="rag.json with top_k, separator, template, max_context_chars.")


def _add_train_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=list(MODEL_ROLES), required=True, help="Which model to train.")
    p.add_argument("--lr", type=float, default=0.1, help="SGD learning rate.")
    p.add_argument("--epochs", type=int, default=1, help="Epochs (per round for federated runs).")
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="Seed for per-epoch shuffles.")
    p.add_argument("--tau", type=float, default=1.0, help="LSR retrieval-score temperature.")
    p.add_argument("--kl-direction", choices=list(KL_DIRECTIONS), default="lm_to_retriever")
    p.add_argument("--length-normalize", action="store_true",
                   help="LSR: divide response log-likelihoods by their step count.")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rag-engine",
        description="Ingest, query, fine-tune (RALT/LSR), federate and benchmark a desk-scale RAG system.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    ing = sub.add_parser("ingest", help="Embed a corpus into a new knowledge store.",
                         formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ing.add_argument("--corpus", required=True, help="Corpus JSONL: {id, title, section, text}.")
    ing.add_argument("--store", required=True, help="Output store directory.")
    ing.add_argument("--dim", type=int, default=64, help="Embedding dimension d (random retriever).")
    ing.add_argument("--features", type=int, default=4096, help="Hashed feature dimension F of the retriever.")
    ing.add_argument("--gen-features", type=int, default=4096, help="Hashed feature dimension of the generator.")
    ing.add_argument("--vocab-size", type=int, default=4096, help="Generator vocabulary size incl. <eos>, <unk>.")
    ing.add_argument("--vocab-dataset", action="append", default=[],
                     help="Extra JSONL (train/benchmark) whose queries and responses feed the vocabulary.")
    ing.add_argument("--retriever", choices=["random", "overlap"], default="random",
                     help="random: splitmix64-initialized encoders; overlap: identity encoders (d = F).")
    ing.add_argument("--checkpoint", default="", help="Reuse the retriever and generator of this checkpoint.")
    ing.add_argument("--seed", type=int, default=0, help="Seed for model initialization.")
    ing.add_argument("--force", action="store_true", help="Overwrite an existing store directory.")
    _add_common(ing)
    ing.set_defaults(func=cmd_ingest)

    q = sub.add_parser("query", help="Answer one question with retrieval-augmented generation.",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_system(q)
    q.add_argument("question")
    q.add_argument("--max-tokens", type=int, default=16)
    q.add_argument("--sample", action="store_true", help="Sample instead of greedy decoding.")
    q.add_argument("--temperature", type=float, default=1.0)
    q.add_argument("--seed", type=int, default=0, help="Sampling seed.")
    q.add_argument("--format", choices=["text", "json"], default="text",
                   help="text: answer line then chunk_id<TAB>score lines; json: one object.")
    _add_common(q)
    q.set_defaults(func=cmd_query)

    t = sub.add_parser("train", help="Fine-tune the retriever (LSR) or generator (RALT).",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_system(t)
    _add_train_config(t)
    t.add_argument("--dataset", required=True, help="Train JSONL: {query, response}.")
    t.add_argument("--out", required=True, help="Output checkpoint directory.")
    _add_common(t)
    t.set_defaults(func=cmd_train)

    fs = sub.add_parser("fl-server", help="Run a synchronous FedAvg server.",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_system(fs)
    _add_train_config(fs)
    fs.add_argument("--rounds", type=int, default=1)
    fs.add_argument("--clients", type=int, default=1, help="Number of clients to wait for.")
    fs.add_argument("--listen", default="127.0.0.1:7070", help="host:port to listen on.")
    fs.add_argument("--out", required=True, help="Output checkpoint directory for the final parameters.")
    _add_common(fs)
    fs.set_defaults(func=cmd_fl_server)

    fc = sub.add_parser("fl-client", help="Join a FedAvg server and train on a local shard.",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_system(fc)
    _add_train_config(fc)
    fc.add_argument("--dataset", required=True, help="Local train JSONL shard (may be empty).")
    fc.add_argument("--server", default="127.0.0.1:7070", help="host:port of the server.")
    fc.add_argument("--client-id", default="client-0")
    fc.add_argument("--out", required=True, help="Output checkpoint directory for the final parameters.")
    _add_common(fc)
    fc.set_defaults(func=cmd_fl_client)

    b = sub.add_parser("benchmark", help="Exact-match benchmark over a JSONL file.",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    _add_system(b)
    b.add_argument("--benchmark", required=True, help="Benchmark JSONL: {query, response, choices}.")
    b.add_argument("--num-examples", type=int, default=None, help="Score only the first N examples.")
    b.add_argument("--agg", choices=list(AGG_MODES), default="avg")
    b.add_argument("--fewshot", type=int, default=0, help="Number of few-shot examples in the prefix.")
    b.add_argument("--fewshot-file", default="", help="Pool for few-shot examples (default: the benchmark).")
    b.add_argument("--seed", type=int, default=0, help="Seed for the few-shot draw.")
    b.add_argument("--max-tokens", type=int, default=16)
    b.add_argument("--streaming", action="store_true", help="Read the benchmark lazily.")
    _add_common(b)
    b.set_defaults(func=cmd_benchmark)
    return p


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        lsr_tau=args.tau,
        lsr_kl_direction=args.kl_direction,
        lsr_length_normalize=args.length_normalize,
    )


def _load_system(args: argparse.Namespace) -> RAGSystem:
    store_dir = Path(args.store)
    store = KnowledgeStore.load(store_dir)
    checkpoint = Path(args.checkpoint) if args.checkpoint else store_dir / MODEL_DIR
    retriever, generator = load_models(checkpoint)
    if retriever.dim != store.dim:
        raise DimensionMismatch(store.dim, retriever.dim, f"retriever in {checkpoint}")
    config = load_rag_config(args.config) if args.config else RAGConfig()
    return RAGSystem(store, retriever, generator, config)


def cmd_ingest(args: argparse.Namespace) -> int:
    out = Path(args.store)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise FileExistsError(f"{out} already exists; pass --force to overwrite")
    records = load_corpus(args.corpus)

    if args.checkpoint:
        retriever, generator = load_models(args.checkpoint)
    else:
        if args.retriever == "overlap":
            retriever = overlap_retriever(args.features)
        else:
            retriever = init_retriever(args.dim, args.features, args.seed)
        texts: List[str] = [r.full_text for r in records]
        for path in args.vocab_dataset:
            texts.extend(f"{ex.query} {ex.response}" for ex in load_train_dataset(path))
        generator = init_generator(build_vocab(texts, args.vocab_size), args.gen_features, args.seed)

    store = KnowledgeStore(retriever.dim)
    n = ingest_corpus(store, retriever, records)
    store.save(out)
    save_checkpoint(out / MODEL_DIR, RAGSystem(store, retriever, generator))
    print(f"ingested {n} chunks")
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    system = _load_system(args)
    gen = GenerationConfig(
        max_tokens=args.max_tokens,
        mode="sample" if args.sample else "greedy",
        temperature=args.temperature,
        seed=args.seed,
    )
    response = rag_query(system, args.question, gen)
    if args.format == "json":
        print(json.dumps(response.to_dict(), ensure_ascii=False))
    else:
        print(response.text)
        for r in response.retrieved:
            print(f"{r.chunk_id}\t{r.score!r}")
    return 0


def _manager(mode: str, system: RAGSystem, dataset: Sequence, config: TrainConfig) -> RAGTrainerManager:
    trainer = build_trainer(mode, system, dataset, config)
    return RAGTrainerManager(
        mode=mode,
        retriever_trainer=trainer if mode == "retriever" else None,
        generator_trainer=trainer if mode == "generator" else None,
    )


def cmd_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    dataset = load_train_dataset(args.dataset)
    if not dataset:
        raise ValueError(f"{args.dataset} holds no training examples")
    system = _load_system(args)
    result = _manager(args.mode, system, dataset, config).train()

    out = Path(args.out)
    save_checkpoint(out, system)
    with (out / TRAIN_LOG).open("w", encoding="utf-8", newline="\n") as fh:
        for epoch, loss in enumerate(result.losses_per_epoch):
            fh.write(json.dumps({"epoch": epoch, "loss": loss}) + "\n")
    print(json.dumps({
        "mode": args.mode,
        "epochs": len(result.losses_per_epoch),
        "final_loss": result.losses_per_epoch[-1],
        "examples_seen": result.examples_seen,
        "skipped": result.skipped,
    }))
    return 0


def cmd_fl_server(args: argparse.Namespace) -> int:
    host, port = parse_address(args.listen)
    system = _load_system(args)
    task = FLTask(model_role=args.mode, train_config=_train_config(args))

    def report(rnd: int, params) -> None:
        print(f"round {rnd}\t{params.l2_norm()!r}", flush=True)

    server = task.server(
        extract_parameters(system, args.mode),
        rounds=args.rounds,
        expected_clients=args.clients,
        host=host,
        port=port,
        on_round=report,
    )
    final = server.serve()
    load_parameters(system, args.mode, final)
    save_checkpoint(args.out, system)
    logger.info("final parameters written to %s", Path(args.out) / PARAMS_FILE)
    return 0


def cmd_fl_client(args: argparse.Namespace) -> int:
    system = _load_system(args)
    dataset = load_train_dataset(args.dataset)
    task = FLTask(model_role=args.mode, train_config=_train_config(args))
    final = task.client(system, dataset, parse_address(args.server), client_id=args.client_id).run()
    save_checkpoint(args.out, system)
    logger.info("final parameters written to %s", Path(args.out) / PARAMS_FILE)
    print(f"done\t{final.l2_norm()!r}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    system = _load_system(args)
    prefix = ""
    if args.fewshot:
        pool = list(load_benchmark(args.fewshot_file or args.benchmark, streaming=False))
        prefix = build_fewshot_prefix(pool, args.fewshot, args.seed)
    benchmarker = Benchmarker(system, GenerationConfig(max_tokens=args.max_tokens, mode="greedy"))
    result = benchmarker.run(
        args.benchmark,
        ExactMatchEvaluationMetric(),
        is_streaming=args.streaming,
        num_examples=args.num_examples,
        agg=args.agg,
        fewshot_prefix=prefix,
    )
    print(json.dumps(result.to_dict(), ensure_ascii=False))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except MissingTrainer as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (RagEngineError, OSError, ValueError, KeyError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
