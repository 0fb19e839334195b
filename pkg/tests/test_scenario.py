import pytest

from repemp.dsl import ParamType
from repemp.scenario import ScenarioError, data_path, load_scenario, parse_scenario

BASE = '''
name = "mini"
programs = """
def up(n: pitch) = note(step(n, up, 1))
def twice(pattern: pattern) = loop(2, pattern)
"""
initial = ["up"]

[probes]
pitch = ["C4"]
pattern = ["[C4]"]

[libraries.one]
programs = ["up"]

[operations.fragments]
staccato = "scale_time(_, 1/2)"

[operations.crossover]
up = ["staccato"]

[[tasks]]
target = "[C4, D4]"
candidates = ["twice"]
'''


def test_base_is_valid():
    sc = parse_scenario(BASE)
    assert sc.library("one").ids == ("up",)
    assert [t.candidates for t in sc.tasks] == [("twice",)]


@pytest.mark.parametrize("old,new,message", [
    ('programs = ["up"]', 'programs = ["up", "ghost"]', "libraries.one: dangling program reference 'ghost'"),
    ('[operations.crossover]\nup', '[operations.crossover]\nghost', "operations.crossover: dangling program reference 'ghost'"),
    ('[[tasks]]', '[operations.mutation.ghost]\nv = { pin = { n = "C4" } }\n\n[[tasks]]',
     "operations.mutation: dangling program reference 'ghost'"),
    ('initial = ["up"]', 'initial = ["ghost"]', "initial: dangling program reference 'ghost'"),
    ('candidates = ["twice"]', 'candidates = ["ghost"]', "tasks[1].candidates: dangling program reference 'ghost'"),
    ('loop(2, pattern)', 'loop(2, ghost(pattern))', "dangling reference to 'ghost'"),
    ('programs = ["up"]', 'programs = ["up"]\nequivalence = "nope"', "unknown equivalence 'nope'"),
    ('up = ["staccato"]', 'up = ["legato"]', "unknown fragment 'legato'"),
    ('[operations.fragments]', '[operations]\ngenerators = ["teleport"]\n\n[operations.fragments]', "unknown generator 'teleport'"),
    ('name = "mini"', 'name = "mini"\nestimator = "magic"', "unknown estimator 'magic'"),
    ('[[tasks]]', '[operations.mutation.up]\nv = { outcomes = [{ p = 0.5, source = "def a() = [C4]" }, '
     '{ p = 0.4, source = "def b() = [D4]" }] }\n\n[[tasks]]', "do not sum to 1"),
    ('pattern = ["[C4]"]\n', '', "no bindings for ParamType 'pattern'"),
    ('target = "[C4, D4]"', 'target = "[]"', "target must be non-empty"),
    ('candidates = ["twice"]', 'candidates = ["up"]', "ids already in the library"),
    ('name = "mini"', 'name = "mini"\nhorizon = 0', "horizon must be >= 1"),
    ('name = "mini"', 'name = "mini"\ndefault_equivalence = "nope"', "default_equivalence"),
    ('[probes]', '[probes]\ncolour = ["red"]', "unknown ParamType 'colour'"),
])
def test_dangling_and_invalid(old, new, message):
    assert old in BASE
    with pytest.raises(ScenarioError) as err:
        parse_scenario(BASE.replace(old, new, 1))
    assert any(message in p for p in err.value.problems), err.value.problems


def test_all_problems_reported_together():
    text = BASE.replace('programs = ["up"]', 'programs = ["ghost"]').replace(
        'candidates = ["twice"]', 'candidates = ["phantom"]')
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert len(err.value.problems) == 2
    assert "ghost" in str(err.value) and "phantom" in str(err.value)


def test_toml_syntax_error():
    with pytest.raises(ScenarioError, match="TOML syntax"):
        parse_scenario("name = ")


def test_missing_file():
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario("/nonexistent/scenario.toml")


def test_mutation_pin_checks_parameter():
    text = BASE.replace('[[tasks]]', '[operations.mutation.up]\nv = { pin = { m = "C4" } }\n\n[[tasks]]')
    with pytest.raises(ScenarioError, match="has no parameter 'm'"):
        parse_scenario(text)


def test_derived_names_may_appear_in_tables():
    text = BASE.replace('[operations.crossover]',
                        '[operations.names]\n"crossover:up:0" = "up_short"\n\n[operations.crossover]\nup_short = ["staccato"]')
    assert "up_short" in parse_scenario(text).tables.crossover


@pytest.mark.parametrize("name", ["s33", "curriculum", "runs", "arpeggio_tune"])
def test_shipped_scenarios_load(name):
    sc = load_scenario(data_path(f"{name}.toml"))
    assert sc.name
    assert ParamType.PITCH in sc.probes.values or not sc.pool


def test_domains_default_to_probes():
    sc = parse_scenario(BASE)
    assert sc.domains == sc.probes.values
