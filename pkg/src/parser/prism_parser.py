"""
CF-Safe - PRISM Parser
Parses the single-module PRISM subset into an Mdp, reporting positioned diagnostics
"""

import bisect
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from src.model.core import Command, FeatureState, Mdp, RewardBlock, Update, Variable
from src.model.errors import ModelParseError
from src.model.expressions import (
    CONNECTIVES,
    INT64_MAX,
    RELATIONS,
    Binary,
    BoolLit,
    ConstRef,
    Expr,
    IntLit,
    Not,
    VarRef,
    negate,
)
from src.parser.regex_patterns import EXPONENT_PATTERN, KEYWORDS, SKIP_PATTERN, TOKEN_PATTERN

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ModelSource:
    text: str
    origin: str = "<inline>"

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "ModelSource":
        path = Path(path)
        data = path.read_bytes()
        try:
            return cls(data.decode("utf-8"), str(path))
        except UnicodeDecodeError as exc:
            before = data[:exc.start].decode("utf-8")
            line = before.count("\n") + 1
            column = len(before) - (before.rfind("\n") + 1) + 1
            diagnostic = ParseDiagnostic("error", line, column, f"invalid UTF-8 byte 0x{data[exc.start]:02x}")
            raise ModelParseError([f"{path}:{diagnostic}"]) from None


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: str
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


@dataclass
class ParseResult:
    mdp: Optional[Mdp]
    diagnostics: List[ParseDiagnostic] = field(default_factory=list)

    @property
    def errors(self) -> List[ParseDiagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def ok(self) -> bool:
        return self.mdp is not None


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int
    end: int


class _SyntaxError(Exception):
    def __init__(self, token: Token, message: str):
        super().__init__(message)
        self.token = token
        self.message = message


class PrismParser:
    def __init__(self, source: ModelSource):
        self.source = source
        self.text = source.text
        self.diagnostics: List[ParseDiagnostic] = []
        self._line_starts = [0] + [i + 1 for i, ch in enumerate(self.text) if ch == "\n"]
        self.tokens: List[Token] = []
        self.pos = 0

        # symbol tables
        self.constants: Dict[str, int] = {}
        self.used_constants: set = set()
        self.variables: List[Variable] = []
        self.initial: List[int] = []
        self.var_index: Dict[str, int] = {}
        self.actions: List[str] = []
        self.commands: List[Command] = []
        self.labels: Dict[str, Expr] = {}
        self.rewards: List[RewardBlock] = []
        self.module_name: Optional[str] = None
        self._allow_variables = True

    def parse(self) -> ParseResult:
        """Main parsing method"""
        self._tokenize()
        try:
            self._parse_model()
        except _SyntaxError as exc:
            self._error(exc.token, exc.message)

        for name in self.constants:
            if name not in self.used_constants:
                self._warning(None, f"constant {name} is never used")

        if any(d.severity == "error" for d in self.diagnostics):
            return ParseResult(None, self.diagnostics)

        mdp = Mdp(
            module_name=self.module_name,
            variables=tuple(self.variables),
            initial_state=FeatureState(tuple(self.initial)),
            actions=tuple(self.actions),
            commands=tuple(self.commands),
            labels=tuple(self.labels.items()),
            constants=tuple(self.constants.items()),
            reward_items=tuple(self.rewards),
        )
        logger.debug("Parsed %s: %d variables, %d commands", self.source.origin, len(self.variables), len(self.commands))
        return ParseResult(mdp, self.diagnostics)

    # ---------- diagnostics ----------

    def _position(self, offset: int) -> Tuple[int, int]:
        line = bisect.bisect_right(self._line_starts, offset)
        return line, offset - self._line_starts[line - 1] + 1

    def _report(self, severity: str, token: Optional[Token], message: str):
        offset = token.offset if token is not None else 0
        line, column = self._position(min(offset, len(self.text)))
        self.diagnostics.append(ParseDiagnostic(severity, line, column, message))

    def _error(self, token: Optional[Token], message: str):
        self._report("error", token, message)

    def _warning(self, token: Optional[Token], message: str):
        self._report("warning", token, message)

    # ---------- tokens ----------

    def _tokenize(self):
        pos = 0
        length = len(self.text)
        while pos < length:
            skip = SKIP_PATTERN.match(self.text, pos)
            if skip:
                pos = skip.end()
                if pos >= length:
                    break
            match = TOKEN_PATTERN.match(self.text, pos)
            if match is None:
                bad = Token("bad", self.text[pos], pos, pos + 1)
                self._error(bad, f"unknown token {self.text[pos]!r}")
                pos += 1
                continue
            kind = match.lastgroup
            text = match.group()
            if kind == "ident" and text in KEYWORDS:
                kind = "keyword"
            self.tokens.append(Token(kind, text, pos, match.end()))
            pos = match.end()
        self.tokens.append(Token("eof", "", length, length))

    def _peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def _advance(self) -> Token:
        token = self._peek()
        if token.kind != "eof":
            self.pos += 1
        return token

    def _at(self, text: str) -> bool:
        token = self._peek()
        return token.text == text and token.kind in ("op", "keyword")

    def _accept(self, text: str) -> Optional[Token]:
        if self._at(text):
            return self._advance()
        return None

    def _expect(self, text: str) -> Token:
        token = self._peek()
        if not self._at(text):
            found = "end of input" if token.kind == "eof" else repr(token.text)
            raise _SyntaxError(token, f"expected {text!r} but found {found}")
        return self._advance()

    def _expect_ident(self, what: str) -> Token:
        token = self._peek()
        if token.kind != "ident":
            found = "end of input" if token.kind == "eof" else repr(token.text)
            raise _SyntaxError(token, f"expected {what} but found {found}")
        return self._advance()

    def _synchronize(self, stops=("endmodule", "label", "rewards", "const", "module")):
        """Skip to just after the next ';' or to the next statement keyword"""
        while True:
            token = self._peek()
            if token.kind == "eof":
                return
            if token.kind == "keyword" and token.text in stops:
                return
            self._advance()
            if token.text == ";" and token.kind == "op":
                return

    # ---------- statements ----------

    def _parse_model(self):
        header = self._peek()
        if not self._accept("mdp"):
            raise _SyntaxError(header, "model must start with 'mdp'")

        while self._peek().kind != "eof":
            token = self._peek()
            try:
                if self._at("const"):
                    self._parse_constant()
                elif self._at("module"):
                    if self.module_name is not None:
                        self._error(token, "only one module is supported")
                    self._parse_module()
                elif self._at("label"):
                    self._parse_label()
                elif self._at("rewards"):
                    self._parse_rewards()
                else:
                    raise _SyntaxError(token, f"unexpected {token.text!r} at top level")
            except _SyntaxError as exc:
                self._error(exc.token, exc.message)
                before = self.pos
                self._synchronize()
                if self.pos == before:
                    self._advance()

        if self.module_name is None:
            self._error(self._peek(), "model has no module")

    def _parse_constant(self):
        self._expect("const")
        self._expect("int")
        name = self._expect_ident("constant name")
        self._expect("=")
        expr = self._parse_expression(allow_variables=False)
        self._expect(";")
        if self._declared(name.text):
            self._error(name, f"duplicate name {name.text}")
            return
        value = self._constant_value(expr, name, "constant")
        if value is not None:
            self.constants[name.text] = value

    def _parse_module(self):
        self._expect("module")
        name = self._expect_ident("module name")
        if self.module_name is None:
            self.module_name = name.text

        declares_variables = False
        while not self._at("endmodule"):
            token = self._peek()
            if token.kind == "eof":
                raise _SyntaxError(token, "missing 'endmodule'")
            try:
                if token.kind == "ident" and self._peek(1).text == ":":
                    declares_variables = True
                    self._parse_variable()
                elif self._at("["):
                    self._parse_command()
                else:
                    raise _SyntaxError(token, f"unexpected {token.text!r} in module")
            except _SyntaxError as exc:
                self._error(exc.token, exc.message)
                before = self.pos
                self._synchronize(stops=("endmodule",))
                if self.pos == before:
                    self._advance()
        if not declares_variables and not self.variables:
            self._error(name, f"module {name.text} declares no variables")
        self._expect("endmodule")

    def _parse_variable(self):
        name = self._expect_ident("variable name")
        self._expect(":")
        self._expect("[")
        low_expr = self._parse_expression(allow_variables=False)
        self._expect("..")
        high_expr = self._parse_expression(allow_variables=False)
        self._expect("]")
        init_token = self._peek()
        init_expr = None
        if self._accept("init"):
            init_expr = self._parse_expression(allow_variables=False)
        self._expect(";")

        if self._declared(name.text):
            self._error(name, f"duplicate name {name.text}")
            return
        lower = self._constant_value(low_expr, name, "lower bound")
        upper = self._constant_value(high_expr, name, "upper bound")
        if lower is None or upper is None:
            return
        if lower > upper:
            self._error(name, f"empty range [{lower}..{upper}] for {name.text}")
            return
        if init_expr is None:
            self._error(init_token, f"missing init for variable {name.text}")
            return
        init = self._constant_value(init_expr, name, "initial value")
        if init is None:
            return
        if not lower <= init <= upper:
            self._error(name, f"initial value {init} of {name.text} outside [{lower}..{upper}]")
            return
        self.var_index[name.text] = len(self.variables)
        self.variables.append(Variable(name.text, lower, upper))
        self.initial.append(init)

    def _parse_command(self):
        start = self._expect("[")
        action_token = self._peek()
        action = None
        if action_token.kind == "ident":
            action = self._advance().text
        self._expect("]")
        guard = self._parse_expression()
        arrow = self._expect("->")
        updates = self._parse_updates()
        self._expect(";")

        if action is None:
            self._error(start, "commands must carry an action label")
            return
        if guard.kind != "bool":
            self._error(arrow, "guard must be a boolean expression")
        self._check_probabilities(updates, arrow)
        if action not in self.actions:
            self.actions.append(action)
        self.commands.append(Command(action, guard, tuple(updates)))

    def _parse_updates(self) -> List[Update]:
        updates = []
        while True:
            token = self._peek()
            if token.kind == "number":
                probability = self._parse_probability()
                self._expect(":")
            else:
                probability = Fraction(1)
            assignments = self._parse_assignments()
            updates.append(Update(probability, assignments))
            if not self._accept("+"):
                break
        return updates

    def _parse_probability(self):
        first = self._advance()
        value = self._number(first)
        if self._accept("/"):
            second = self._peek()
            if second.kind != "number":
                raise _SyntaxError(second, "expected a denominator")
            self._advance()
            denominator = self._number(second)
            if denominator == 0:
                raise _SyntaxError(second, "division by zero in probability")
            if isinstance(value, float) or isinstance(denominator, float):
                value = float(value) / float(denominator)
            else:
                value = value / denominator
        if not 0 < value <= 1:
            self._error(first, f"probability {_format_number(value)} outside (0, 1]")
        return value

    @staticmethod
    def _number(token: Token):
        if EXPONENT_PATTERN.search(token.text):
            return float(token.text)
        return Fraction(token.text)

    def _parse_assignments(self) -> Tuple[Tuple[int, Expr], ...]:
        if self._accept("true"):
            return ()
        assignments: List[Tuple[int, Expr]] = []
        seen = set()
        while True:
            self._expect("(")
            target = self._expect_ident("variable name")
            self._expect("'")
            self._expect("=")
            expr = self._parse_expression()
            self._expect(")")
            if target.text not in self.var_index:
                self._error(target, f"unbound variable {target.text}")
            elif target.text in seen:
                self._error(target, f"variable {target.text} assigned twice")
            else:
                if expr.kind != "int":
                    self._error(target, f"update of {target.text} must be an integer expression")
                seen.add(target.text)
                assignments.append((self.var_index[target.text], expr))
            if not self._accept("&"):
                break
        return tuple(assignments)

    def _check_probabilities(self, updates: List[Update], token: Token):
        total = sum((u.probability for u in updates), Fraction(0))
        exact = all(isinstance(u.probability, Fraction) for u in updates)
        if (exact and total != 1) or (not exact and abs(total - 1) > PROBABILITY_TOLERANCE):
            self._error(token, f"probabilities sum to {_format_number(total)}")

    def _parse_label(self):
        self._expect("label")
        name = self._peek()
        if name.kind != "string":
            raise _SyntaxError(name, "expected a quoted label name")
        self._advance()
        self._expect("=")
        expr = self._parse_expression()
        self._expect(";")
        label = name.text[1:-1]
        if label in self.labels:
            self._error(name, f"duplicate label \"{label}\"")
            return
        if expr.kind != "bool":
            self._error(name, f"label \"{label}\" must be a boolean expression")
            return
        self.labels[label] = expr

    def _parse_rewards(self):
        header = self._expect("rewards")
        name = None
        if self._peek().kind == "string":
            name = self._advance().text[1:-1]
        body_start = self.tokens[self.pos - 1].end
        while not self._at("endrewards"):
            if self._peek().kind == "eof":
                raise _SyntaxError(header, "missing 'endrewards'")
            self._advance()
        end = self._advance()
        lines = [line.strip() for line in self.text[body_start:end.offset].splitlines()]
        self.rewards.append(RewardBlock(name, tuple(line for line in lines if line)))

    # ---------- expressions ----------

    def _parse_expression(self, allow_variables: bool = True) -> Expr:
        previous = self._allow_variables
        self._allow_variables = allow_variables
        try:
            return self._parse_or()
        finally:
            self._allow_variables = previous

    def _binary(self, op_token: Token, left: Expr, right: Expr) -> Expr:
        op = op_token.text
        if op in CONNECTIVES:
            wanted = "bool"
        else:
            wanted = "int"
        if left.kind != wanted or right.kind != wanted:
            self._error(op_token, f"operator {op} expects {'boolean' if wanted == 'bool' else 'integer'} operands")
        return Binary(op, left, right)

    def _parse_or(self) -> Expr:
        left = self._parse_and()
        while self._at("|"):
            op = self._advance()
            left = self._binary(op, left, self._parse_and())
        return left

    def _parse_and(self) -> Expr:
        left = self._parse_not()
        while self._at("&"):
            op = self._advance()
            left = self._binary(op, left, self._parse_not())
        return left

    def _parse_not(self) -> Expr:
        if self._at("!"):
            op = self._advance()
            operand = self._parse_not()
            if operand.kind != "bool":
                self._error(op, "operator ! expects a boolean operand")
            return Not(operand)
        return self._parse_relation()

    def _parse_relation(self) -> Expr:
        left = self._parse_additive()
        token = self._peek()
        if token.kind == "op" and token.text in RELATIONS:
            self._advance()
            left = self._binary(token, left, self._parse_additive())
        return left

    def _parse_additive(self) -> Expr:
        left = self._parse_multiplicative()
        while self._at("+") or self._at("-"):
            op = self._advance()
            left = self._binary(op, left, self._parse_multiplicative())
        return left

    def _parse_multiplicative(self) -> Expr:
        left = self._parse_unary()
        while self._at("*"):
            op = self._advance()
            left = self._binary(op, left, self._parse_unary())
        return left

    def _parse_unary(self) -> Expr:
        if self._at("-"):
            op = self._advance()
            operand = self._parse_unary()
            if operand.kind != "int":
                self._error(op, "unary - expects an integer operand")
            return negate(operand)
        return self._parse_atom()

    def _parse_atom(self) -> Expr:
        token = self._peek()
        if token.kind == "number":
            self._advance()
            if not token.text.isdigit():
                self._error(token, f"expected an integer but found {token.text}")
                return IntLit(0)
            value = int(token.text)
            if value > INT64_MAX:
                self._error(token, f"integer literal {token.text} does not fit in 64 bits")
                return IntLit(0)
            return IntLit(value)
        if self._accept("true"):
            return BoolLit(True)
        if self._accept("false"):
            return BoolLit(False)
        if token.kind == "ident":
            self._advance()
            if token.text in self.constants:
                self.used_constants.add(token.text)
                return ConstRef(token.text, self.constants[token.text])
            if self._allow_variables and token.text in self.var_index:
                return VarRef(token.text, self.var_index[token.text])
            self._error(token, f"unbound variable {token.text}")
            return IntLit(0)
        if self._accept("("):
            inner = self._parse_or()
            self._expect(")")
            return inner
        found = "end of input" if token.kind == "eof" else repr(token.text)
        raise _SyntaxError(token, f"expected an expression but found {found}")

    # ---------- helpers ----------

    def _declared(self, name: str) -> bool:
        return name in self.constants or name in self.var_index

    def _constant_value(self, expr: Expr, token: Token, what: str) -> Optional[int]:
        if expr.kind != "int":
            self._error(token, f"{what} of {token.text} must be an integer")
            return None
        try:
            return int(expr.compile()(()))
        except Exception as exc:
            self._error(token, f"{what} of {token.text}: {exc}")
            return None


def _format_number(value) -> str:
    return f"{float(value):g}"


def parse_model(source: ModelSource) -> ParseResult:
    """Parse PRISM-subset text; the result carries an Mdp only when there are no errors"""
    return PrismParser(source).parse()


def load_model(path: Union[str, Path]) -> Mdp:
    """Parse a .prism file, raising ModelParseError on error diagnostics"""
    source = ModelSource.from_path(path)
    result = parse_model(source)
    for diagnostic in result.diagnostics:
        if diagnostic.severity == "warning":
            logger.warning("%s:%s", source.origin, diagnostic)
    if result.mdp is None:
        raise ModelParseError([f"{source.origin}:{d}" for d in result.errors])
    logger.info("Loaded model %s (%d variables, %d commands)", source.origin,
                len(result.mdp.variables), len(result.mdp.commands))
    return result.mdp
