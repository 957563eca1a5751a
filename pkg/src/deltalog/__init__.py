"""Column-oriented Datalog materialization.

A rule program is evaluated to its least fixpoint with one-rule-per-step
semi-naive evaluation; newly derived facts are stored in immutable,
run-length-encoded columnar blocks annotated with the step and rule that
produced them, which enables data-driven pruning of whole blocks and
goal-directed pre-computation of selected body atoms.
"""

from .columns import (
    ConstantColumn,
    EdbProxyColumn,
    Relation,
    RleColumn,
    SharedColumn,
    SortedTable,
    build_table,
    concat_blocks,
    dedup_subtract,
    hash_join,
    merge_join,
    rle_decode,
    rle_encode,
)
from .edb import Dictionary, EdbStore
from .engine import (
    Block,
    BlockStore,
    MaterializeOptions,
    apply_rule,
    export_facts,
    materialize,
)
from .errors import (
    ArityError,
    DataError,
    DeltalogError,
    ParseError,
    SafetyError,
    UnknownIdError,
    UnknownPredicateError,
)
from .lang import (
    Atom,
    Const,
    PredKind,
    Predicate,
    Program,
    Rule,
    Term,
    Var,
    apply_subst,
    is_trivially_redundant,
    parse_atom,
    parse_program,
    program_to_text,
    resolve,
    subsumes,
    unify,
)
from .memo import MemoPlan, memoize, qsqr_answer, select_memo_candidates
from .optimize import (
    PruneContext,
    prune_mismatch,
    prune_redundant,
    prune_subsumed_static,
    should_check_dynamic,
)
from .stats import StatsReport

__version__ = "0.1.0"
