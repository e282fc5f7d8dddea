import regex

# Regular expression patterns for tokenizing PRISM-subset model files

# Whitespace and // line comments are skipped between tokens
SKIP_PATTERN = regex.compile(r'(?:\s+|//[^\n]*)+')

# Numbers: integers, decimals, and exponent-form doubles
NUMBER_PATTERN = r'\d+(?:\.\d+)?(?:[eE][+-]?\d+)?'

# Identifiers (variables, constants, actions, module names)
IDENTIFIER_PATTERN = r'[A-Za-z_][A-Za-z0-9_]*'

# Quoted label / reward-structure names
STRING_PATTERN = r'"[^"\n]*"'

# Multi-character operators must be tried before their prefixes
OPERATOR_PATTERN = r"->|\.\.|<=|>=|!=|[\[\]();:=<>+\-*/&|!',]"

TOKEN_PATTERN = regex.compile(
    rf'(?P<number>{NUMBER_PATTERN})'
    rf'|(?P<ident>{IDENTIFIER_PATTERN})'
    rf'|(?P<string>{STRING_PATTERN})'
    rf'|(?P<op>{OPERATOR_PATTERN})'
)

KEYWORDS = {
    "mdp", "const", "int", "module", "endmodule", "init",
    "label", "rewards", "endrewards", "true", "false",
}

# Exponent form marks a double; everything else is an exact rational literal
EXPONENT_PATTERN = regex.compile(r'[eE]')
