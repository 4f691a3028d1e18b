import numpy as np
import pytest

from trussim import data
from trussim.analysis import evaluate
from trussim.data import (Demonstration, ParseError, demo_images,
                          load_demonstrations, make_windows,
                          save_demonstrations, split, synth_demonstrations)
from trussim.imaging import rasterize
from trussim.truss import default_problem, state_record, validate_design


@pytest.fixture(scope="module")
def problem():
    return default_problem(load_newtons=400.0)


@pytest.fixture(scope="module")
def demos(problem):
    return synth_demonstrations(12, problem, np.random.default_rng(3), "mixed")


def test_synth_counts_and_validity(problem, demos):
    assert len(demos) == 12
    for demo in demos:
        assert len(demo.states) >= 2
        for state in demo.states:
            assert validate_design(state, problem) == []
        for a, b in zip(demo.states, demo.states[1:]):
            assert state_record(a) != state_record(b)


def test_synth_deterministic(problem):
    a = synth_demonstrations(5, problem, np.random.default_rng(9), "warren")
    b = synth_demonstrations(5, problem, np.random.default_rng(9), "warren")
    for da, db in zip(a, b):
        assert [state_record(s) for s in da.states] == \
            [state_record(s) for s in db.states]


def test_synth_final_feasibility_rate(problem):
    demos = synth_demonstrations(50, problem, np.random.default_rng(21), "mixed")
    feasible = sum(evaluate(d.states[-1], problem).feasible for d in demos)
    assert feasible / len(demos) >= 0.8


@pytest.mark.parametrize("style", ["warren", "pratt", "greedy"])
def test_synth_styles(problem, style):
    demos = synth_demonstrations(4, problem, np.random.default_rng(1), style)
    assert all(d.source == style for d in demos)


def test_synth_rejects_bad_args(problem):
    with pytest.raises(ValueError):
        synth_demonstrations(0, problem, np.random.default_rng(0))
    with pytest.raises(ValueError):
        synth_demonstrations(3, problem, np.random.default_rng(0), "bauhaus")


def test_save_load_roundtrip(tmp_path, problem, demos):
    path = tmp_path / "demos.txt"
    save_demonstrations(demos, path)
    back = load_demonstrations(path, problem)
    assert len(back) == len(demos)
    for a, b in zip(demos, back):
        assert a.demo_id == b.demo_id
        assert a.source == b.source
        assert [state_record(s) for s in a.states] == \
            [state_record(s) for s in b.states]


def test_load_empty_file(tmp_path, caplog):
    path = tmp_path / "empty.txt"
    path.write_text("")
    assert load_demonstrations(path) == []


def test_load_handwritten_sequence(tmp_path):
    lines = [
        "# a comment",
        "d0 0 | nodes: 0:4.0:0.0:fixed;1:72.0:0.0:fixed;2:38.0:0.0:fixed | members: ",
        "d0 1 | nodes: 0:4.0:0.0:fixed;1:72.0:0.0:fixed;2:38.0:0.0:fixed | members: 0-2:1",
        "d0 2 | nodes: 0:4.0:0.0:fixed;1:72.0:0.0:fixed;2:38.0:0.0:fixed | members: 0-2:1;1-2:2",
    ]
    path = tmp_path / "hand.txt"
    path.write_text("\n".join(lines) + "\n")
    demos = load_demonstrations(path)
    assert len(demos) == 1
    assert len(demos[0].states) == 3
    assert demos[0].source == "human-ingested"
    assert demos[0].states[2].members == {(0, 2): 1, (1, 2): 2}


def test_load_reports_bad_lines(tmp_path, caplog):
    good = "d0 {i} | nodes: 0:4.0:0.0:fixed;1:72.0:0.0:fixed | members: {m}"
    lines = [good.format(i=0, m=""), "garbage line without structure",
             good.format(i=1, m="0-1:1")]
    path = tmp_path / "mixed.txt"
    path.write_text("\n".join(lines) + "\n")
    with caplog.at_level("WARNING"):
        demos = load_demonstrations(path)
    assert len(demos) == 1
    assert any(":2:" in rec.message for rec in caplog.records)  # line number


def test_load_all_bad_raises(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("junk\nmore junk\n")
    with pytest.raises(ParseError):
        load_demonstrations(path)


def test_load_drops_single_state_demo(tmp_path, caplog):
    lines = [
        "solo 0 | nodes: 0:4.0:0.0:fixed | members: ",
        "pair 0 | nodes: 0:4.0:0.0:fixed | members: ",
        "pair 1 | nodes: 0:4.0:0.0:fixed;1:30.0:10.0:free | members: ",
    ]
    path = tmp_path / "short.txt"
    path.write_text("\n".join(lines) + "\n")
    with caplog.at_level("WARNING"):
        demos = load_demonstrations(path)
    assert [d.demo_id for d in demos] == ["pair"]


def test_split_deterministic_and_disjoint(demos):
    train, test = split(demos, 0.8, seed=4)
    assert len(train) == 10 and len(test) == 2
    train2, test2 = split(demos, 0.8, seed=4)
    assert [d.demo_id for d in train] == [d.demo_id for d in train2]
    ids_train = {d.demo_id for d in train}
    ids_test = {d.demo_id for d in test}
    assert not ids_train & ids_test
    assert ids_train | ids_test == {d.demo_id for d in demos}
    with pytest.raises(ValueError):
        split(demos[:1])


def test_make_windows_counts(problem):
    demo = synth_demonstrations(1, problem, np.random.default_rng(6), "warren")[0]
    T = len(demo.states)
    phase1 = make_windows([demo], phase=1)
    phase2 = make_windows([demo], phase=2)
    assert len(phase1) == T - 4
    assert len(phase2) == T - 5
    # T=10 demo, phase 2 -> 5 windows; T=6 -> 1 window
    short = Demonstration("s", "synthetic", demo.states[:6])
    assert len(make_windows([short], phase=2)) == 1
    ten = Demonstration("t", "synthetic", demo.states[:10])
    assert len(make_windows([ten], phase=2)) == 5
    five = Demonstration("f", "synthetic", demo.states[:5])
    assert len(make_windows([five], phase=1)) == 1
    assert make_windows([five], phase=1)[0].target is demo.states[4]
    assert make_windows([five], phase=2) == []


def test_make_windows_contents(problem, demos):
    windows = make_windows(demos[:2], phase=2)
    for w in windows:
        demo = next(d for d in demos if d.demo_id == w.demo_id)
        t = demo.states.index(w.inputs[-1])
        assert list(w.inputs) == demo.states[t - 4:t + 1]
        assert w.target is demo.states[t + 1]


def test_make_windows_pad_front(problem):
    demo = synth_demonstrations(1, problem, np.random.default_rng(6), "warren")[0]
    T = len(demo.states)
    padded = make_windows([demo], phase=2, pad_front=True)
    assert len(padded) == T - 1
    first = padded[0]
    assert all(state is demo.states[0] for state in first.inputs)
    assert first.target is demo.states[1]
    # a 2-state demo becomes trainable only with padding
    tiny = Demonstration("tiny", "synthetic", demo.states[:2])
    assert make_windows([tiny], phase=2) == []
    assert len(make_windows([tiny], phase=2, pad_front=True)) == 1
    with pytest.raises(ValueError):
        make_windows([demo], phase=3)


def test_demo_images_rederive_identically(problem, demos):
    demo = demos[0]
    stack = demo_images(demo, problem)
    assert stack.shape == (len(demo.states), 76, 76)
    for img, state in zip(stack, demo.states):
        assert np.array_equal(img, rasterize(state, problem))
    cached = demo_images(demo, problem, cache={})
    assert np.array_equal(stack, cached)


def test_save_rejects_short_demo(tmp_path, problem):
    demo = Demonstration("x", "synthetic", [problem.base_design()])
    with pytest.raises(ValueError):
        save_demonstrations([demo], tmp_path / "bad.txt")
