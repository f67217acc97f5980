"""Command-line interface: single decodes, parameter sweeps, and selftest.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

Defaults follow the package's reference configuration: alpha 0.3, prefix
length 4, draft length 5, temperature 0.8, and the ``[BACK]`` probe
template. Without a corpus the CLI runs in raw-integer token mode over a
seeded table model; with ``--corpus`` it builds a word tokenizer and
count-based models from the file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .bench import (
    SweepSpec,
    emit_report,
    mean_accepted_tokens,
    run_sweep,
    write_decode_stats,
)
from .corpus import (
    BACK_WORD,
    IntTokenizer,
    WordTokenizer,
    load_corpus_documents,
    load_prompt_lines,
)
from .engine import DecodeConfig, decode
from .errors import InvalidConfigError, ReflectSpecError
from .models import (
    BlendModel,
    Model,
    ModelSpec,
    NgramModel,
    TableModel,
    divergence_noise_model,
    make_reflection_aware,
)
from .reflective import (
    DEFAULT_TEMPLATE_TEXT,
    ReflectiveTemplate,
    ResolvedTemplate,
    resolve_template,
)
from .selftest import run_all
from .tokens import derive_seed


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ReflectSpecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflectspec",
        description="Speculative decoding with reflective verification on toy backends.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_decode = sub.add_parser("decode", help="run a single decode and print tokens plus stats")
    _add_model_args(p_decode)
    _add_decode_args(p_decode)
    p_decode.add_argument("--prompt", help="prompt text (tokens in the active tokenizer)")
    p_decode.add_argument("--prompt-file", help="file whose first line is the prompt")
    p_decode.add_argument("--out", help="write a decode stats JSON file here")
    p_decode.add_argument(
        "--full-stats",
        action="store_true",
        help="include feed sizes and wall time in the stats file (breaks byte-reproducibility)",
    )
    p_decode.add_argument(
        "--timing", action="store_true", help="print toy-backend wall time on stdout"
    )
    p_decode.add_argument("--verbose", "-v", action="store_true", help="print per-step detail")
    p_decode.set_defaults(func=cmd_decode)

    p_sweep = sub.add_parser("sweep", help="run a parameter grid and write a report file")
    _add_model_args(p_sweep)
    _add_decode_args(p_sweep, sweep=True)
    p_sweep.add_argument("--prompt", action="append", default=[], help="add one prompt (repeatable)")
    p_sweep.add_argument("--prompt-file", help="prompt set file, one prompt per line")
    p_sweep.add_argument("--seeds", default="0", help="comma-separated seed grid")
    p_sweep.add_argument("--out", required=True, help="report file path")
    p_sweep.add_argument("--format", choices=("csv", "json"), default="csv", help="report format")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_sweep.add_argument(
        "--timing",
        action="store_true",
        help="include toy-backend timing columns (breaks byte-reproducibility)",
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_self = sub.add_parser("selftest", help="run the built-in oracle suite")
    p_self.set_defaults(func=cmd_selftest)

    return parser


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--target-model",
        choices=("table", "ngram"),
        default="table",
        help="target backend (ngram requires --corpus)",
    )
    p.add_argument(
        "--draft-model",
        choices=("same", "noisy", "table"),
        default="same",
        help="draft backend: same as target base, an eta-blend of it, or an independent table",
    )
    p.add_argument("--vocab-size", type=int, default=64, help="vocabulary size (integer mode)")
    p.add_argument("--seed", type=int, default=0, help="model and decode base seed")
    p.add_argument("--order", type=int, default=2, help="context order of the toy backends")
    p.add_argument("--smoothing", type=float, default=1.0, help="ngram additive smoothing")
    p.add_argument(
        "--beta",
        type=float,
        default=0.0,
        help="reflection-aware blend of the target (0 disables the wrapper)",
    )
    p.add_argument("--eta", type=float, default=0.0, help="draft divergence rate for --draft-model noisy")
    p.add_argument(
        "--marker",
        type=int,
        default=None,
        help="marker token id for the reflection-aware wrapper (default: the [BACK] token)",
    )
    p.add_argument("--corpus", help="corpus file: whitespace tokens, one document per line")


def _add_decode_args(p: argparse.ArgumentParser, sweep: bool = False) -> None:
    if sweep:
        p.add_argument("--alpha", default="0.3", help="comma-separated alpha grid")
        p.add_argument("--gamma", default="5", help="comma-separated draft length grid")
        p.add_argument(
            "--strategy",
            default="specsample",
            help="comma-separated strategies from: exact,specsample,typical,vanilla",
        )
        p.add_argument("--eta-grid", default=None, help="comma-separated eta grid (overrides --eta)")
        p.add_argument(
            "--template-inline",
            action="append",
            default=[],
            help="add a template variant written inline (repeatable)",
        )
        p.add_argument(
            "--template-file",
            action="append",
            default=[],
            help="add a template variant from a file (repeatable)",
        )
    else:
        p.add_argument("--alpha", type=float, default=0.3, help="reflective fusion weight")
        p.add_argument("--gamma", type=int, default=5, help="draft tokens per step")
        p.add_argument(
            "--strategy",
            choices=("exact", "specsample", "typical", "vanilla"),
            default="specsample",
            help="verification strategy (vanilla = no speculation)",
        )
        p.add_argument("--template-inline", help="template text, e.g. '${draft} [BACK] ${prefix} ${draft}'")
        p.add_argument("--template-file", help="read the template from a file")
    p.add_argument("--temperature", type=float, default=0.8, help="sampling temperature (0 = greedy)")
    p.add_argument("--epsilon", type=float, default=0.3, help="typical-sampling probability cap")
    p.add_argument("--delta", type=float, default=0.2, help="typical-sampling entropy scale")
    p.add_argument("--prefix-len", type=int, default=4, help="committed tokens replayed before the second copy")
    p.add_argument("--max-tokens", type=int, default=64, help="maximum new tokens to emit")
    p.add_argument("--eos-token", type=int, default=None, help="stop after this token id")
    p.add_argument(
        "--entropy-source",
        choices=("original", "fused"),
        default="original",
        help="distribution whose entropy gates typical sampling",
    )
    p.add_argument(
        "--match-mode",
        choices=("sample", "greedy"),
        default="sample",
        help="exact-match verification draws samples or takes the argmax",
    )


# ---------------------------------------------------------------------------
# Environment assembly
# ---------------------------------------------------------------------------


@dataclass
class Environment:
    tokenizer: IntTokenizer | WordTokenizer
    vocab_size: int
    corpus_docs: list[list[int]] | None
    template: ResolvedTemplate
    prompts: list[list[int]]
    target: Model
    draft: Model
    base_target: Model
    marker: int


def _template_text(args, sweep: bool = False) -> list[str]:
    if sweep:
        texts = list(args.template_inline)
        for path in args.template_file:
            texts.append(Path(path).read_text(encoding="utf-8").strip())
        return texts or [DEFAULT_TEMPLATE_TEXT]
    if args.template_inline and args.template_file:
        raise InvalidConfigError("give either --template-inline or --template-file, not both")
    if args.template_inline:
        return [args.template_inline]
    if args.template_file:
        return [Path(args.template_file).read_text(encoding="utf-8").strip()]
    return [DEFAULT_TEMPLATE_TEXT]


def _prompt_texts(args, sweep: bool = False) -> list[str]:
    if sweep:
        texts = list(args.prompt)
        if args.prompt_file:
            texts.extend(load_prompt_lines(args.prompt_file))
        if not texts:
            raise InvalidConfigError("sweep needs --prompt or --prompt-file")
        return texts
    if args.prompt and args.prompt_file:
        raise InvalidConfigError("give either --prompt or --prompt-file, not both")
    if args.prompt:
        return [args.prompt]
    if args.prompt_file:
        return [load_prompt_lines(args.prompt_file)[0]]
    raise InvalidConfigError("decode needs --prompt or --prompt-file")


def build_environment(args, template_texts: list[str], prompt_texts: list[str]) -> Environment:
    """Build tokenizer, models, and token-level inputs from CLI arguments.

    In word mode the vocabulary grows while the corpus, templates, prompts,
    and marker are encoded, and is frozen before any model is built.
    """
    corpus_docs = None
    if args.corpus:
        tokenizer: IntTokenizer | WordTokenizer = WordTokenizer()
        corpus_docs = load_corpus_documents(args.corpus, tokenizer)
    else:
        if args.target_model == "ngram":
            raise InvalidConfigError("ngram models require --corpus")
        tokenizer = IntTokenizer(args.vocab_size)
    templates = [resolve_template(text, tokenizer) for text in template_texts]
    prompts = [tokenizer.encode(text, extend=True) for text in prompt_texts]
    for prompt in prompts:
        if not prompt:
            raise InvalidConfigError("prompts must hold at least one token")
    if args.marker is not None:
        marker = args.marker
    elif isinstance(tokenizer, WordTokenizer):
        marker = tokenizer.encode(BACK_WORD, extend=True)[0]
    else:
        marker = tokenizer.specials[BACK_WORD]
    vocab_size = tokenizer.vocab_size if isinstance(tokenizer, WordTokenizer) else args.vocab_size
    if vocab_size < 2:
        raise InvalidConfigError("effective vocabulary must hold at least two tokens")

    if args.target_model == "table":
        base_target: Model = TableModel(vocab_size, seed=args.seed, order=args.order)
    else:
        base_target = NgramModel(corpus_docs, vocab_size, order=args.order, smoothing=args.smoothing)
    if args.beta > 0:
        target: Model = make_reflection_aware(base_target, marker, args.beta)
    else:
        target = base_target

    if args.draft_model == "same":
        draft: Model = base_target
    elif args.draft_model == "noisy":
        noise_spec = ModelSpec("table", vocab_size, seed=args.seed, order=args.order)
        draft = BlendModel(base_target, divergence_noise_model(noise_spec), args.eta)
    else:
        draft = TableModel(vocab_size, seed=derive_seed("draft-model", args.seed), order=args.order)

    return Environment(
        tokenizer=tokenizer,
        vocab_size=vocab_size,
        corpus_docs=corpus_docs,
        template=templates[0],
        prompts=prompts,
        target=target,
        draft=draft,
        base_target=base_target,
        marker=marker,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_decode(args) -> int:
    env = build_environment(args, _template_text(args), _prompt_texts(args))
    resolved = env.template
    config = DecodeConfig(
        gamma=args.gamma,
        alpha=args.alpha,
        temperature=args.temperature,
        strategy=args.strategy,
        epsilon=args.epsilon,
        delta=args.delta,
        template=ReflectiveTemplate(
            prompt_tokens=resolved.prompt_tokens,
            prefix_len=args.prefix_len if resolved.has_prefix else 0,
        ),
        reflect=resolved.reflective and args.strategy != "vanilla",
        entropy_source=args.entropy_source,
        exact_match_mode=args.match_mode,
        max_new_tokens=args.max_tokens,
        eos_token=args.eos_token,
        seed=args.seed,
    )
    output, stats = decode(env.target, env.draft, env.prompts[0], config)

    print("output tokens:", " ".join(str(t) for t in output))
    if isinstance(env.tokenizer, WordTokenizer):
        print("output text:", env.tokenizer.decode(output))
    mat = mean_accepted_tokens(stats)
    print(f"steps: {stats.num_steps}  emitted: {stats.total_tokens_emitted}  mat: {mat:.4f}")
    if args.strategy != "vanilla":
        rates = _acceptance_by_position(stats, config.gamma)
        print("acceptance by position:", " ".join(f"{r:.3f}" for r in rates))
        print(f"mean input budget/step: {stats.total_input_tokens / stats.num_steps:.2f}")
        print(f"draft forwards: {stats.total_draft_forwards}")
    if args.verbose:
        for i, s in enumerate(stats.steps):
            print(f"  step {i}: accepted {s.accepted_n}, emitted {s.tokens_emitted}")
    if args.timing:
        print(
            f"wall time: {stats.total_wall_time:.4f}s "
            "(toy backends; not a production throughput number)"
        )
    if args.out:
        write_decode_stats(stats, args.out, include_diagnostics=args.full_stats)
        print(f"stats written to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    template_texts = _template_text(args, sweep=True)
    prompt_texts = _prompt_texts(args, sweep=True)
    env = build_environment(args, template_texts, prompt_texts)
    templates = tuple(resolve_template(t, env.tokenizer) for t in template_texts)
    etas = _float_grid(args.eta_grid) if args.eta_grid else (args.eta,)
    strategies = tuple(s.strip() for s in args.strategy.split(",") if s.strip())
    base_kind = args.target_model
    spec = SweepSpec(
        prompts=tuple(tuple(p) for p in env.prompts),
        base=ModelSpec(
            base_kind,
            env.vocab_size,
            seed=args.seed,
            order=args.order,
            smoothing=args.smoothing,
        ),
        alphas=_float_grid(args.alpha),
        gammas=tuple(int(g) for g in args.gamma.split(",")),
        strategies=strategies,
        etas=etas,
        templates=templates,
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        corpus=tuple(tuple(d) for d in env.corpus_docs) if env.corpus_docs else None,
        beta=args.beta,
        marker=env.marker,
        temperature=args.temperature,
        prefix_len=args.prefix_len,
        max_new_tokens=args.max_tokens,
        epsilon=args.epsilon,
        delta=args.delta,
        entropy_source=args.entropy_source,
        eos_token=args.eos_token,
    )
    rows = run_sweep(spec, jobs=args.jobs)
    emit_report(rows, args.format, args.out, include_timing=args.timing)
    failures = [r for r in rows if r.error]
    print(f"wrote {len(rows)} rows to {args.out} ({len(failures)} failed cells)")
    return 0


def cmd_selftest(args) -> int:
    results = run_all()
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
    return 0 if all(r.passed for r in results) else 1


def _float_grid(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).split(",") if str(v).strip())


def _acceptance_by_position(stats, gamma: int) -> list[float]:
    if stats.num_steps == 0:
        return []
    return [
        sum(1 for s in stats.steps if s.accepted_n > i) / stats.num_steps for i in range(gamma)
    ]


if __name__ == "__main__":
    sys.exit(main())
