from .ltl import LAlways, LAnd, LEventually, LOr, LUntil, Ltl, ltl_text, to_ltl
from .semantics import (
    Action,
    KLTrajectory,
    TrajectoryError,
    belief_rho_finite,
    check_loop,
    loop_defects,
    n_unroll,
    predicate_margin,
    rho,
    rho_finite,
    sat_bool,
    sat_finite,
    unroll,
)
from .syntax import (
    FALSE,
    TRUE,
    Always,
    And,
    Formula,
    FormulaError,
    FormulaSyntaxError,
    ModePred,
    Or,
    Prob,
    StateFormula,
    Until,
    children,
    closure,
    horizon,
    is_state_formula,
    parse,
    predicates,
    state_formulas,
    to_text,
    walk,
)
