"""Command-line entry point wiring all modules together.

Subcommands::

    ruletag rules validate RULES.json [--corpus FILE]
    ruletag train CONFIG.ini
    ruletag tag --checkpoint M --embeddings E --input TXT --output JSONL
    ruletag eval --gold G.jsonl --pred P.jsonl --task pos|ner --outdir DIR
    ruletag synth gen --outdir DIR [...]
    ruletag rerun MANIFEST.json

Every run emits a manifest (subcommand, resolved settings, input file
hashes, seed, version, timestamps); ``rerun`` replays one and, for a
fixed seed, reproduces the original outputs byte-exactly.

Exit codes: 0 success, 1 validation failure, 2 bad configuration,
3 data mismatch.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .corpus import OTHER_TAG, Sentence, Tagset, read_jsonl, read_plain_text, write_jsonl
from .embeddings import load_embeddings, save_embeddings, subword_embeddings
from .errors import (
    ConfigError,
    EmptyInput,
    IoError,
    LengthError,
    NumericalError,
    ParseError,
    RuletagError,
    SchemaError,
    ShapeError,
    ValidationError,
)
from .evaluate import (
    confusion_to_csv,
    confusion_to_text,
    macro_f1,
    mean_stdev,
    save_report_json,
    span_f1,
)
from .losses import SFT, UNSUPERVISED, LossWeights
from .model import ModelConfig, Tagger, build_char_vocab, load_checkpoint
from .rules import coverage_report, load_rules, save_rules
from .silver import SilverConfig, generate_silver, write_summary
from .synthlang import GrammarSpec, Grammar, derive_rules, sample_corpus, save_spec
from .train import TrainConfig, train_sft, train_unsupervised

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

CONFIG_ERRORS = (ConfigError, IoError, EmptyInput, LengthError, NumericalError)
VALIDATION_ERRORS = (ValidationError, ParseError, SchemaError)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record written by every subcommand."""

    subcommand: str
    params: dict
    seed: int | None = None
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    toolkit_version: str = __version__
    started_at: str = ""
    finished_at: str = ""

    def start(self) -> "RunManifest":
        self.started_at = datetime.now(timezone.utc).isoformat()
        return self

    def add_input(self, name: str, path: str | Path) -> None:
        self.inputs[name] = {"path": str(path), "sha256": sha256_file(path)}

    def as_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "toolkit_version": self.toolkit_version,
            "seed": self.seed,
            "params": self.params,
            "inputs": self.inputs,
            "outputs": [str(p) for p in self.outputs],
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    def write(self, path: str | Path) -> None:
        self.finished_at = datetime.now(timezone.utc).isoformat()
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(self.as_dict(), handle, ensure_ascii=False, indent=2, sort_keys=True)
            handle.write("\n")


def _fail(exit_code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(exit_code)


@click.group()
@click.version_option(version=__version__)
def main():
    """Rule-guided neural sequence tagging toolkit."""


# -- rules ------------------------------------------------------------------------


@main.group("rules")
def rules_group():
    """Inspect and validate rule files."""


@rules_group.command("validate")
@click.argument("rules_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False),
              help="Plain-text corpus for a tier coverage report.")
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False),
              help="Also write a run manifest to this path.")
def cmd_rules_validate(rules_path, corpus_path, manifest_path):
    """Validate a rule file; exit 1 on conflicts or bad entries."""
    params = {"rules": rules_path, "corpus": corpus_path}
    manifest = RunManifest("rules validate", params).start()
    try:
        manifest.add_input("rules", rules_path)
        rules = load_rules(rules_path)
    except VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, str(exc))
    click.echo(f"rules OK: {len(rules.tagset)} tags, "
               f"{len(rules.tier1)} tier1, {len(rules.tier2)} tier2, "
               f"{len(rules.tier3)} tier3 entries")
    if corpus_path:
        manifest.add_input("corpus", corpus_path)
        corpus = read_plain_text(corpus_path)
        report = coverage_report(rules, corpus)
        click.echo(
            f"coverage over {report.total_tokens} tokens: "
            f"tier1 {report.tier1:.3f}  tier2 {report.tier2:.3f}  "
            f"tier3 {report.tier3:.3f}  oov {report.oov:.3f}"
        )
    if manifest_path:
        manifest.write(manifest_path)
    sys.exit(EXIT_OK)


# -- configuration parsing ------------------------------------------------------------


def _parse_train_config(path: str) -> dict:
    """INI config -> plain dict of resolved settings.

    Environment variables RULETAG_RULES, RULETAG_CORPUS, RULETAG_GOLD,
    RULETAG_EMBEDDINGS and RULETAG_INIT_CHECKPOINT override the [data]
    paths (and only the paths).
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def section(name):
        return dict(parser[name]) if parser.has_section(name) else {}

    run = section("run")
    model = section("model")
    data = section("data")
    optim = section("optim")
    loss = section("loss")

    mode = run.get("mode", UNSUPERVISED)
    if mode not in (UNSUPERVISED, SFT):
        raise ConfigError(f"run.mode must be unsupervised or sft, got {mode!r}")
    architecture = model.get("architecture", "recurrent")

    for key in ("rules", "corpus", "gold", "embeddings", "init_checkpoint"):
        env = os.environ.get(f"RULETAG_{key.upper()}")
        if env:
            data[key] = env

    if "rules" not in data:
        raise ConfigError("config is missing data.rules")
    if "embeddings" not in data:
        raise ConfigError("config is missing data.embeddings")
    if mode == UNSUPERVISED and "corpus" not in data:
        raise ConfigError("unsupervised mode needs data.corpus")
    if mode == SFT and "gold" not in data:
        raise ConfigError("sft mode needs data.gold")
    if "outdir" not in run:
        raise ConfigError("config is missing run.outdir")

    defaults = TrainConfig.default(mode, architecture)
    resolved = {
        "mode": mode,
        "seed": int(run.get("seed", 0)),
        "outdir": run["outdir"],
        "architecture": architecture,
        "model": {
            "word_emb_dim": int(model.get("word_emb_dim", 300)),
            "char_emb_dim": int(model.get("char_emb_dim", 50)),
            "char_input_dim": int(model.get("char_input_dim", 25)),
            "token_hidden": int(model.get("token_hidden", 256)),
            "model_dim": int(model.get("model_dim", 768)),
            "layers": int(model.get("layers", 10)),
            "heads": int(model.get("heads", 6)),
            "ff_dim": int(model.get("ff_dim", 3072)),
            "dropout": float(
                model.get("dropout", ModelConfig.default(architecture, 2).dropout)
            ),
            "max_len": int(model.get("max_len", 512)),
        },
        "data": data,
        "optim": {
            "epochs": int(optim.get("epochs", defaults.epochs)),
            "batch_size": int(optim.get("batch_size", defaults.batch_size)),
            "learning_rate": float(optim.get("learning_rate", defaults.learning_rate)),
            "weight_decay": float(optim.get("weight_decay", defaults.weight_decay)),
            "max_grad_norm": float(optim.get("max_grad_norm", defaults.max_grad_norm)),
        },
        "loss": {
            "alpha": float(loss.get("alpha", 0.85)),
            "beta": float(loss.get("beta", 0.08)),
            "gamma": float(loss.get("gamma", 0.02)),
            "delta": float(loss.get("delta", 0.05)),
            "keep_rule_loss_in_sft": loss.get("keep_rule_loss_in_sft", "false").lower()
            in ("1", "true", "yes"),
        },
    }
    return resolved


def _run_train(params: dict) -> None:
    outdir = Path(params["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("train", params, seed=params["seed"]).start()
    data = params["data"]

    rules = load_rules(data["rules"])
    manifest.add_input("rules", data["rules"])
    embeddings = load_embeddings(data["embeddings"], expected_dim=params["model"]["word_emb_dim"])
    manifest.add_input("embeddings", data["embeddings"])

    weights = LossWeights(
        params["loss"]["alpha"],
        params["loss"]["beta"],
        params["loss"]["gamma"],
        params["loss"]["delta"],
    )
    train_config = TrainConfig(
        mode=params["mode"],
        seed=params["seed"],
        weights=weights,
        keep_rule_loss_in_sft=params["loss"]["keep_rule_loss_in_sft"],
        **params["optim"],
    )

    if params["mode"] == UNSUPERVISED:
        corpus = read_plain_text(data["corpus"])
        manifest.add_input("corpus", data["corpus"])
        model_config = ModelConfig(
            architecture=params["architecture"], n_tags=len(rules.tagset), **params["model"]
        )
        result = train_unsupervised(
            train_config, model_config, rules, corpus, embeddings, outdir=outdir
        )
    else:
        gold = read_jsonl(data["gold"])
        manifest.add_input("gold", data["gold"])
        if data.get("init_checkpoint"):
            tagger = load_checkpoint(data["init_checkpoint"])
            manifest.add_input("init_checkpoint", data["init_checkpoint"])
            if list(tagger.tagset) != list(rules.tagset):
                raise SchemaError(
                    "checkpoint tagset does not match the rules tagset"
                )
        else:
            model_config = ModelConfig(
                architecture=params["architecture"], n_tags=len(rules.tagset), **params["model"]
            )
            tagger = Tagger.init(
                model_config,
                rules.tagset,
                build_char_vocab([g.sentence for g in gold]),
                seed=params["seed"],
            )
        result = train_sft(train_config, tagger, gold, embeddings, rules=rules)
        from .model import save_checkpoint
        from .train import write_loss_csv

        save_checkpoint(result.tagger, outdir / "final.ckpt")
        write_loss_csv(result.history, outdir / "loss.csv")
        result.checkpoint_paths.append(outdir / "final.ckpt")

    manifest.outputs = [str(p) for p in result.checkpoint_paths] + [str(outdir / "loss.csv")]
    manifest.write(outdir / "manifest.json")
    final = result.history[-1]
    click.echo(
        f"trained {params['mode']} for {train_config.epochs} epochs; "
        f"final loss {final.total:.6f} -> {outdir}"
    )


@main.command("train")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
def cmd_train(config_path):
    """Train from an INI config; writes checkpoints, loss CSV, manifest."""
    try:
        params = _parse_train_config(config_path)
        _run_train(params)
    except VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, str(exc))
    sys.exit(EXIT_OK)


# -- tagging -----------------------------------------------------------------------


def _run_tag(params: dict) -> None:
    manifest = RunManifest("tag", params, seed=None).start()
    tagger = load_checkpoint(params["checkpoint"])
    manifest.add_input("checkpoint", params["checkpoint"])
    embeddings = load_embeddings(
        params["embeddings"], expected_dim=tagger.config.word_emb_dim
    )
    manifest.add_input("embeddings", params["embeddings"])
    manifest.add_input("input", params["input"])
    rules = None
    if params.get("rules"):
        rules = load_rules(params["rules"])
        manifest.add_input("rules", params["rules"])
    config = SilverConfig(confidence_threshold=params["threshold"])
    summary = generate_silver(
        config, tagger, embeddings, params["input"], params["output"], rules=rules
    )
    summary_path = params.get("summary") or params["output"] + ".summary.json"
    write_summary(summary, summary_path)
    manifest.outputs = [params["output"], str(summary_path)]
    manifest.write(params["output"] + ".manifest.json")
    click.echo(
        f"tagged {summary['sentences']} sentences / {summary['tokens']} tokens; "
        f"OTHER fraction {summary['other_fraction']:.4f} -> {params['output']}"
    )


@main.command("tag")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--embeddings", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--threshold", default=0.5, show_default=True,
              help="Confidence below which tokens are tagged OTHER (0 disables).")
@click.option("--rules", "rules_path", type=click.Path(exists=True, dir_okay=False),
              help="Optional rule file; adds tier coverage to the summary.")
@click.option("--summary", "summary_path", type=click.Path(dir_okay=False))
def cmd_tag(checkpoint, embeddings, input_path, output, threshold, rules_path, summary_path):
    """Tag a plain-text corpus into silver-standard JSONL."""
    params = {
        "checkpoint": checkpoint,
        "embeddings": embeddings,
        "input": input_path,
        "output": output,
        "threshold": threshold,
        "rules": rules_path,
        "summary": summary_path,
    }
    try:
        _run_tag(params)
    except VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, str(exc))
    sys.exit(EXIT_OK)


# -- evaluation ---------------------------------------------------------------------


def _aligned_tags(gold_sents, pred_sents):
    if len(gold_sents) != len(pred_sents):
        raise ShapeError(
            f"gold has {len(gold_sents)} sentences, predictions {len(pred_sents)}"
        )
    for g, p in zip(gold_sents, pred_sents):
        if g.tokens != p.tokens:
            raise ShapeError(
                f"token mismatch in sentence {g.text!r} vs {p.text!r}"
            )
    return (
        [t for s in gold_sents for t in s.tags],
        [t for s in pred_sents for t in s.tags],
    )


def _eval_one(gold_sents, pred_sents, task: str, outdir: Path, stem: str) -> dict:
    gold_flat, pred_flat = _aligned_tags(gold_sents, pred_sents)
    if task == "pos":
        tags = sorted(set(gold_flat))
        has_other = OTHER_TAG in pred_flat
        tagset = Tagset(tags + [OTHER_TAG]) if has_other else Tagset(tags)
        report = macro_f1(gold_flat, pred_flat, tagset, macro_over=tags)
        save_report_json(report, outdir / f"{stem}.json")
        (outdir / f"{stem}.txt").write_text(report.render_text(), encoding="utf-8")
        confusion_to_csv(report.confusion, tagset, outdir / f"{stem}_confusion.csv")
        (outdir / f"{stem}_heatmap.txt").write_text(
            confusion_to_text(report.confusion, tagset), encoding="utf-8"
        )
        return {"word_accuracy": report.word_accuracy, "macro_f1": report.macro_f1}
    report = span_f1([list(s.tags) for s in gold_sents], [list(s.tags) for s in pred_sents])
    save_report_json(report, outdir / f"{stem}.json")
    (outdir / f"{stem}.txt").write_text(report.render_text(), encoding="utf-8")
    gold_flat, pred_flat = _aligned_tags(gold_sents, pred_sents)
    accuracy = float(np.mean([g == p for g, p in zip(gold_flat, pred_flat)]))
    return {"word_accuracy": accuracy, "span_f1": report.micro.f1}


def _run_eval(params: dict) -> None:
    outdir = Path(params["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("eval", params).start()
    manifest.add_input("gold", params["gold"])
    gold_sents = read_jsonl(params["gold"])
    pred_path = Path(params["pred"])
    task = params["task"]

    if pred_path.is_dir():
        runs = sorted(pred_path.glob("*.jsonl"))
        if not runs:
            raise ConfigError(f"no .jsonl prediction files in {pred_path}")
        metrics: dict[str, list[float]] = {}
        for run in runs:
            manifest.add_input(run.stem, run)
            result = _eval_one(gold_sents, read_jsonl(run), task, outdir, run.stem)
            for key, value in result.items():
                metrics.setdefault(key, []).append(value)
        lines = [f"aggregate over {len(runs)} runs:"]
        aggregate = {}
        for key, values in metrics.items():
            mean, stdev = mean_stdev(values)
            aggregate[key] = {"mean": mean, "stdev": stdev, "values": values}
            lines.append(f"  {key}: {mean:.4f} +/- {stdev:.4f}")
        text = "\n".join(lines)
        (outdir / "aggregate.txt").write_text(text + "\n", encoding="utf-8")
        with open(outdir / "aggregate.json", "w", encoding="utf-8") as handle:
            json.dump(aggregate, handle, indent=2, sort_keys=True)
            handle.write("\n")
        click.echo(text)
    else:
        manifest.add_input("pred", pred_path)
        result = _eval_one(gold_sents, read_jsonl(pred_path), task, outdir, "report")
        click.echo("  ".join(f"{k} {v:.4f}" for k, v in sorted(result.items())))

    manifest.outputs = sorted(str(p) for p in outdir.iterdir())
    manifest.write(outdir / "manifest.json")


@main.command("eval")
@click.option("--gold", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pred", required=True, type=click.Path(exists=True),
              help="Prediction JSONL, or a directory of per-seed JSONL files.")
@click.option("--task", type=click.Choice(["pos", "ner"]), default="pos", show_default=True)
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
def cmd_eval(gold, pred, task, outdir):
    """Score predictions against gold; writes JSON/text reports."""
    params = {"gold": gold, "pred": pred, "task": task, "outdir": outdir}
    try:
        _run_eval(params)
    except ShapeError as exc:
        _fail(EXIT_DATA, str(exc))
    except VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, str(exc))
    sys.exit(EXIT_OK)


# -- synthetic language ----------------------------------------------------------------


@main.group("synth")
def synth_group():
    """Synthetic-language experiments."""


def _run_synth_gen(params: dict) -> None:
    outdir = Path(params["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("synth gen", params, seed=params["seed"]).start()
    spec = GrammarSpec(
        vocab_per_tag=params["vocab_per_tag"],
        ambiguity=params["ambiguity"],
        seed=params["seed"],
    )
    grammar = Grammar.build(spec)
    corpus = sample_corpus(grammar, params["sentences"], (params["len_min"], params["len_max"]))
    heldout = sample_corpus(
        grammar, params["heldout"], (params["len_min"], params["len_max"]), stream=1
    )
    rules = derive_rules(grammar, coverage=params["coverage"])
    embeddings = subword_embeddings(
        grammar.words, dim=params["embedding_dim"], seed=params["seed"]
    )

    save_spec(spec, outdir / "grammar.json")
    write_jsonl(corpus, outdir / "corpus.jsonl")
    write_jsonl(heldout, outdir / "heldout.jsonl")
    with open(outdir / "unlabeled.txt", "w", encoding="utf-8", newline="\n") as handle:
        for sentence in corpus:
            handle.write(sentence.text + "\n")
    save_rules(rules, outdir / "rules.json")
    save_embeddings(embeddings, outdir / "embeddings.txt")

    manifest.outputs = sorted(str(p) for p in outdir.iterdir())
    manifest.write(outdir / "manifest.json")
    click.echo(
        f"generated {params['sentences']}+{params['heldout']} sentences, "
        f"{len(grammar.words)} words, rules at coverage {params['coverage']} -> {outdir}"
    )


@synth_group.command("gen")
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
@click.option("--sentences", default=2000, show_default=True)
@click.option("--heldout", default=200, show_default=True)
@click.option("--vocab-per-tag", default=60, show_default=True)
@click.option("--ambiguity", default=0.10, show_default=True)
@click.option("--coverage", default=0.85, show_default=True)
@click.option("--embedding-dim", default=50, show_default=True)
@click.option("--len-min", default=4, show_default=True)
@click.option("--len-max", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_synth_gen(outdir, sentences, heldout, vocab_per_tag, ambiguity, coverage,
                  embedding_dim, len_min, len_max, seed):
    """Emit a toy corpus, matching rules, embeddings and grammar manifest."""
    params = {
        "outdir": outdir,
        "sentences": sentences,
        "heldout": heldout,
        "vocab_per_tag": vocab_per_tag,
        "ambiguity": ambiguity,
        "coverage": coverage,
        "embedding_dim": embedding_dim,
        "len_min": len_min,
        "len_max": len_max,
        "seed": seed,
    }
    try:
        _run_synth_gen(params)
    except CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, str(exc))
    sys.exit(EXIT_OK)


# -- rerun from manifest ------------------------------------------------------------


RUNNERS = {
    "train": _run_train,
    "tag": _run_tag,
    "eval": _run_eval,
    "synth gen": _run_synth_gen,
}


@main.command("rerun")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
def cmd_rerun(manifest_path):
    """Replay a previous run from its manifest."""
    try:
        with open(manifest_path, encoding="utf-8") as handle:
            manifest = json.load(handle)
        subcommand = manifest.get("subcommand")
        runner = RUNNERS.get(subcommand)
        if runner is None:
            raise ConfigError(f"manifest subcommand {subcommand!r} cannot be rerun")
        runner(manifest["params"])
    except ShapeError as exc:
        _fail(EXIT_DATA, str(exc))
    except VALIDATION_ERRORS as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, str(exc))
    except (KeyError, json.JSONDecodeError) as exc:
        _fail(EXIT_CONFIG, f"bad manifest: {exc}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
