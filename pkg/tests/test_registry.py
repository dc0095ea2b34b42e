import pytest

from prognosis_forest.registry import (
    TEST_IDS,
    NormalRange,
    Registry,
    default_registry,
    load_registry,
    save_registry,
)


def test_default_registry_has_the_ten_tests():
    reg = default_registry()
    assert reg.ids == list(TEST_IDS)
    assert len(reg) == 10


def test_ferritin_range_depends_on_sex():
    ferritin = default_registry()["Ferritin"]
    assert ferritin.range_for("M").upper == 400
    assert ferritin.range_for("F").upper == 150
    # 300 is normal for a man but two bins up for a woman
    assert ferritin.categorize(300, "M") == 0
    assert ferritin.categorize(300, "F") == 1


def test_xray_bounds():
    xray = default_registry()["XRayScore"]
    assert xray.admissible(0) and xray.admissible(18)
    assert not xray.admissible(25)
    assert not xray.admissible(-1)


@pytest.mark.parametrize("value, bin", [(250, 0), (100, 0), (553, 2), (500, 1), (1000, 2), (2500, 4), (2600, 5)])
def test_ddimer_bins(value, bin):
    assert default_registry()["DDimer"].categorize(value) == bin


def test_exclusive_upper_bound_goes_to_first_bin():
    xray = default_registry()["XRayScore"]
    assert xray.categorize(6.9) == 0
    assert xray.categorize(7) == 1


def test_normal_range_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        NormalRange(10, 5)


def test_registry_round_trip(tmp_path):
    reg = default_registry()
    path = tmp_path / "reg.json"
    save_registry(reg, path)
    assert load_registry(path) == reg


def test_missing_registry_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_registry(tmp_path / "nope.json")


def test_duplicate_ids_rejected():
    t = default_registry()["PCR"]
    with pytest.raises(ValueError):
        Registry((t, t))
