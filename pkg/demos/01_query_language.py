"""The boolean query dialect: parsing, canonical rendering, repair.

Queries use terms, quoted phrases, AND/OR/NOT (uppercase), parentheses,
and the field prefixes title: / abstract:. Model-generated text rarely
arrives clean, so the repair pass turns almost-queries into valid ones
and logs every edit it makes.
"""
from bioqa.query import IrreparableQueryError, parse_query, render_query, repair_query

# =============================================================================
# Parsing well-formed queries
# =============================================================================

ast = parse_query('("night blindness" OR nyctalopia) AND retinitis')
print("parsed:", ast)

# The canonical printer emits explicit operators and minimal parentheses.
print("canonical:", render_query(ast))

# Bare adjacency means AND by default (configurable):
print("adjacency:", parse_query("covid vaccine"))
print("as OR:    ", parse_query("covid vaccine", default_operator="OR"))

# =============================================================================
# Parse errors carry a character position
# =============================================================================

for bad in ["covid AND (vaccine", 'title:"heart', "ti:covid", "fever~2"]:
    try:
        parse_query(bad)
    except Exception as exc:
        print(f"{bad!r:25} -> {exc}")

# =============================================================================
# Repair: salvage model output instead of rejecting it
# =============================================================================

examples = [
    "covid AND (vaccine",          # missing closing paren
    'ti:"heart',                   # unknown field prefix + unbalanced quote
    "covid* fever~2 boost^1.5",    # wildcards, fuzziness, boosts
    "(aspirin OR ())",             # empty group
    "AND covid OR",                # dangling operators
]
for text in examples:
    repaired, log = repair_query(text)
    actions = ", ".join(a.value for a in log.actions) or "(none)"
    print(f"{text!r:32} -> {repaired!r:28} actions: {actions}")

# Only input with no salvageable atom at all is irreparable:
try:
    repair_query("*** ???")
except IrreparableQueryError as exc:
    print("irreparable:", exc)
