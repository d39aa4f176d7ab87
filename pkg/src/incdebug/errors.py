"""Exception hierarchy shared by every module of the engine."""


class DatalogError(Exception):
    """Base class for all user-facing errors."""


class ParseError(DatalogError):
    def __init__(self, message, line=None, column=None, source=None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        where = ""
        if line is not None:
            where = f"{source or '<input>'}:{line}:{column}: "
        super().__init__(where + message)


class ArityError(ParseError):
    pass


class SafetyViolation(DatalogError):
    def __init__(self, rule_id, variable):
        self.rule_id = rule_id
        self.variable = variable
        super().__init__(f"rule {rule_id}: variable {variable} is not bound by a positive body atom")


class UnstratifiableNegation(DatalogError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("negation inside a recursive cycle: " + " -> ".join(self.cycle))


class DiffConflict(DatalogError):
    def __init__(self, message, fact=None, line=None):
        self.fact = fact
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class TupleAbsent(DatalogError):
    def __init__(self, fact):
        self.fact = fact
        super().__init__(f"{fact} is not present")


class NotInDelta(DatalogError):
    def __init__(self, fact):
        self.fact = fact
        super().__init__(f"{fact} was not changed by the diff")


class EnumerationBudgetExceeded(DatalogError):
    def __init__(self, limit, fact=None):
        self.limit = limit
        self.fact = fact
        super().__init__(f"more than {limit} proof trees" + (f" for {fact}" if fact else ""))


class NodeBudgetExceeded(DatalogError):
    def __init__(self, limit):
        self.limit = limit
        super().__init__(f"ILP search exceeded {limit} nodes")


class IlpInfeasible(DatalogError):
    pass


class StratumLoopExceeded(DatalogError):
    def __init__(self, bound):
        self.bound = bound
        super().__init__(f"negation flipping did not settle within {bound} rounds")


class DeltaDebugTimeout(DatalogError):
    def __init__(self, budget, result):
        self.budget = budget
        self.result = result
        super().__init__(f"delta debugging exceeded {budget} s")


class FaultSpecError(DatalogError):
    pass
