import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amplifier.data import (DataError, ScalerStats, SeriesFrame, chrono_split, load_csv,
                            protocol_ratios, standardize, window_count, window_starts,
                            windows, write_csv)


def frame_of(values):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    return SeriesFrame([f"t{i}" for i in range(values.shape[1])], values,
                       [f"c{i}" for i in range(values.shape[0])])


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- csv -------------------------------------------------------------------------

def test_load_small_file(tmp_path):
    p = write(tmp_path, "date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5,6\n")
    f = load_csv(p)
    assert f.n_channels == 2 and len(f) == 3
    assert f.channels == ["a", "b"]
    np.testing.assert_array_equal(f.values, [[1, 3, 5], [2, 4, 6]])


def test_blank_cell_error_names_cell(tmp_path):
    p = write(tmp_path, "date,a,b\nx,1,2\ny,3,\n")
    with pytest.raises(DataError) as err:
        load_csv(p)
    msg = str(err.value)
    assert "row 3" in msg and "column 2" in msg and "'b'" in msg and "missing" in msg


def test_non_numeric_cell_rejected(tmp_path):
    p = write(tmp_path, "date,a\nx,1\ny,abc\n")
    with pytest.raises(DataError, match=r"row 3, column 1.*not a number"):
        load_csv(p)


def test_ragged_row_rejected(tmp_path):
    p = write(tmp_path, "date,a,b\nx,1,2\ny,3\n")
    with pytest.raises(DataError, match="row 3 has 2 fields"):
        load_csv(p)


def test_missing_file_and_bad_header(tmp_path):
    with pytest.raises(DataError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv")
    with pytest.raises(DataError, match="date"):
        load_csv(write(tmp_path, "time,a\nx,1\n"))


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    f = frame_of(rng.normal(size=(3, 50)) * 1e3)
    write_csv(f, tmp_path / "out.csv")
    back = load_csv(tmp_path / "out.csv")
    np.testing.assert_allclose(back.values, f.values, atol=1e-12)
    assert back.timestamps == f.timestamps and back.channels == f.channels


# --- splits -----------------------------------------------------------------------

def test_split_rule_example():
    f = frame_of(np.arange(100.0))
    s = chrono_split(f, lookback=10, horizon=5, ratios=(0.7, 0.1, 0.2))
    assert s.bounds == {"train": (0, 70), "val": (60, 80), "test": (70, 100)}
    np.testing.assert_array_equal(s.val.values[0], np.arange(60.0, 80.0))


def test_split_rejects_empty_segment():
    with pytest.raises(ValueError, match="val split is empty"):
        chrono_split(frame_of(np.arange(100.0)), 10, 5, (1, 0, 0))


def test_split_rejects_short_segment():
    with pytest.raises(ValueError, match="needs at least"):
        chrono_split(frame_of(np.arange(100.0)), 10, 15, (0.7, 0.1, 0.2))


def test_protocols():
    assert protocol_ratios("auto", "/x/ETTh1.csv") == (0.6, 0.2, 0.2)
    assert protocol_ratios("auto", "weather.csv") == (0.7, 0.1, 0.2)
    assert protocol_ratios("standard", "ETTm2.csv") == (0.7, 0.1, 0.2)
    with pytest.raises(ValueError):
        protocol_ratios("bogus")


@settings(max_examples=50, deadline=None)
@given(st.integers(100, 400), st.integers(1, 12), st.integers(1, 8))
def test_window_counts_match_enumeration(n, L, tau):
    f = frame_of(np.arange(float(n)))
    s = chrono_split(f, L, tau)
    for name in ("train", "val", "test"):
        seg = getattr(s, name)
        brute = sum(1 for t in range(len(seg)) if t + L + tau <= len(seg))
        assert window_count(len(seg), L, tau) == brute == len(seg) - L - tau + 1
        got = sum(len(b.starts) for b in windows(seg, L, tau, 7))
        assert got == brute
    # training targets stay inside the training rows; val/test targets start at their boundary
    last_train_target = s.bounds["train"][0] + window_starts(len(s.train), L, tau)[-1] + L + tau
    assert last_train_target <= s.bounds["train"][1]
    first_val = s.val.values[0, L]
    assert first_val == s.bounds["train"][1]


# --- scaler -----------------------------------------------------------------------

def test_scaler_uses_train_only_and_inverts():
    rng = np.random.default_rng(1)
    f = frame_of(np.concatenate([rng.normal(0, 1, (2, 700)), rng.normal(50, 9, (2, 300))], axis=1))
    s, stats = standardize(chrono_split(f, 10, 5))
    np.testing.assert_allclose(stats.mean, f.values[:, :700].mean(axis=1))
    np.testing.assert_allclose(s.train.values.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(stats.inverse(s.test.values), chrono_split(f, 10, 5).test.values, atol=1e-9)


def test_scaler_std_floor():
    stats = ScalerStats.fit(frame_of(np.full((2, 10), 3.0)))
    assert np.all(stats.std >= 1e-8)


# --- windows ----------------------------------------------------------------------

def test_window_starts_example():
    np.testing.assert_array_equal(window_starts(5, 2, 1), [0, 1, 2])


def test_windows_alignment_and_final_short_batch():
    f = frame_of(np.arange(20.0).reshape(2, 10))
    batches = list(windows(f, 3, 2, batch_size=4))
    assert [len(b.starts) for b in batches] == [4, 2]
    for b in batches:
        for i, t in enumerate(b.starts):
            np.testing.assert_array_equal(b.inputs[i], f.values[:, t:t + 3])
            np.testing.assert_array_equal(b.targets[i], f.values[:, t + 3:t + 5])


def test_shuffle_is_seeded_permutation():
    f = frame_of(np.arange(100.0))
    order = lambda seed: np.concatenate([b.starts for b in windows(f, 5, 3, 8, shuffle_seed=seed)])
    np.testing.assert_array_equal(order(7), order(7))
    assert not np.array_equal(order(7), order(8))


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 120), st.integers(1, 10), st.integers(1, 10), st.integers(1, 33),
       st.one_of(st.none(), st.integers(0, 2**32 - 1)))
def test_every_start_exactly_once(n, L, tau, batch, seed):
    f = frame_of(np.arange(float(n)))
    starts = [int(t) for b in windows(f, L, tau, batch, seed) for t in b.starts]
    assert sorted(starts) == list(range(max(n - L - tau + 1, 0)))
