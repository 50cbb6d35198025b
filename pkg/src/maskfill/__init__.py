"""maskfill: privacy-preserving token masking, substitution, and evaluation."""

from .corpus import (
    MASK,
    Corpus,
    CorpusError,
    FrequencyTable,
    Sentence,
    build_frequency_table,
    corpus_from_lines,
    load_corpus,
    save_corpus,
)
from .lm import (
    BOS,
    EOS,
    UNK,
    PerplexityReport,
    TrainingError,
    TrigramLM,
    adapt_lm,
    combine_counts,
    perplexity,
    train_lm,
)
from .masking import (
    BuiltinTagger,
    HttpTagger,
    MaskedCorpus,
    MaskedSentence,
    MaskStats,
    TaggerError,
    keep_set,
    load_masked_corpus,
    mask_allowlist,
    mask_entities,
    mask_stats,
    mask_vocabthres,
    masked_to_corpus,
    save_masked_corpus,
)
from .obfuscate import (
    INSTRUCTION,
    CorpusFillError,
    FillCandidate,
    FillError,
    FineTune,
    FinetuneError,
    MaskFiller,
    ParseMisaligned,
    Prompt,
    RandomSource,
    Top1,
    TopK,
    build_prompts,
    fill_top1,
    fill_topk,
    finetune_loop,
    merge_consecutive_masks,
    obfuscate_corpus,
    parse_generation,
)
from .remote import (
    FillerError,
    FillerUnavailable,
    ProtocolError,
    RemoteFiller,
    ServiceEndpoint,
    ServiceError,
    canonical_json,
)
from .statfiller import StatFiller, train_background
from .synth import TrigramSource

__version__ = "0.1.0"
