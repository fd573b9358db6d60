"""Index arithmetic and enumeration order of the configuration spaces."""

import itertools

import pytest

from reconfsched.config_space import (
    ConfigSpace,
    CoreConfig,
    HeteroSpace,
    load_space,
    save_space,
    space_from_dict,
    space_hash,
)


@pytest.fixture
def space():
    return ConfigSpace()


def test_default_counts(space):
    assert space.n_core_configs == 27
    assert space.n_cache_options == 4
    assert space.size == 108


def test_encode_decode_bijection(space):
    seen = set()
    for cfg in space.core_configs:
        for ci in range(space.n_cache_options):
            idx = space.encode(cfg, ci)
            seen.add(idx)
            got_cfg, got_ways = space.decode(idx)
            assert got_cfg == cfg
            assert got_ways == space.cache_options[ci]
    assert seen == set(range(108))


def test_last_pair_encodes_to_107(space):
    assert space.encode(space.core_configs[-1], 3) == 107


def test_enumeration_order_widest_first_ls_slowest(space):
    # Back end varies fastest, then front end, load/store slowest.
    assert space.core_configs[0] == CoreConfig(6, 6, 6)
    assert space.core_configs[1] == CoreConfig(6, 4, 6)
    assert space.core_configs[2] == CoreConfig(6, 2, 6)
    assert space.core_configs[3] == CoreConfig(4, 6, 6)
    assert space.core_configs[9] == CoreConfig(6, 6, 4)
    assert space.core_configs[-1] == CoreConfig(2, 2, 2)
    # Oracle: full regeneration from the stated nesting.
    desc = [6, 4, 2]
    expect = [
        CoreConfig(fe, be, ls)
        for ls, fe, be in itertools.product(desc, desc, desc)
    ]
    assert space.core_configs == expect


def test_single_way_space_endpoints():
    sp = ConfigSpace(cache_options=(1.0,))
    first_cfg, first_ways = sp.decode(0)
    last_cfg, last_ways = sp.decode(sp.size - 1)
    assert (first_cfg, first_ways) == (CoreConfig(6, 6, 6), 1.0)
    assert (last_cfg, last_ways) == (CoreConfig(2, 2, 2), 1.0)


def test_composite_index_is_config_major(space):
    cfg = space.core_configs[5]
    for ci in range(4):
        assert space.encode(cfg, ci) == 5 * 4 + ci


def test_cache_ways_lookup(space):
    assert space.cache_ways_of(0) == 0.5
    assert space.cache_ways_of(3) == 4.0
    assert space.cache_index_of(2.0) == 2
    with pytest.raises(ValueError):
        space.cache_index_of(3.0)


def test_out_of_range_rejected(space):
    with pytest.raises(ValueError):
        space.decode(108)
    with pytest.raises(ValueError):
        space.decode(-1)
    with pytest.raises(ValueError):
        space.encode(CoreConfig(6, 6, 6), 4)
    with pytest.raises(ValueError):
        space.config_index_of(CoreConfig(3, 3, 3))


def test_invalid_definitions_rejected():
    with pytest.raises(ValueError):
        ConfigSpace(levels=(2, 2, 4))
    with pytest.raises(ValueError):
        ConfigSpace(levels=())
    with pytest.raises(ValueError):
        ConfigSpace(cache_options=(0.0, 1.0))


def test_hetero_layout():
    h = HeteroSpace()
    assert h.n_small == 8
    assert h.n_big == 27  # oracle: 3 levels ** 3 sections
    assert h.size == 35
    assert list(h.small_range) == list(range(0, 8))
    assert list(h.big_range) == list(range(8, 35))
    assert h.decode(0) == ("small", CoreConfig(2, 2, 2))
    assert h.decode(7) == ("small", CoreConfig(1, 1, 1))
    assert h.decode(8) == ("big", CoreConfig(4, 4, 4))
    assert h.decode(34) == ("big", CoreConfig(2, 2, 2))
    assert h.encode("big", CoreConfig(4, 4, 4)) == 8
    assert not h.is_big(7)
    assert h.is_big(8)
    assert h.cache_ways_of(20) == 1.0


def test_hetero_big_contains_full_width():
    h = HeteroSpace()
    assert CoreConfig(4, 4, 4) in h.big_configs
    assert len(h.big_configs) == len(set(h.big_configs))


def test_serialization_round_trip(tmp_path):
    for sp in (ConfigSpace(), HeteroSpace(), ConfigSpace(levels=(1, 3), cache_options=(1.0, 2.0))):
        p = tmp_path / "space.json"
        save_space(sp, p)
        back = load_space(p)
        assert back == sp
        assert space_hash(back) == space_hash(sp)


def test_space_hash_distinguishes():
    assert space_hash(ConfigSpace()) != space_hash(HeteroSpace())
    assert space_hash(ConfigSpace()) != space_hash(ConfigSpace(levels=(2, 4, 8)))
    assert len(space_hash(ConfigSpace())) == 12


def test_space_from_dict_defaults():
    sp = space_from_dict({"hetero": False})
    assert isinstance(sp, ConfigSpace)
    assert sp.levels == (2, 4, 6)
    h = space_from_dict({"hetero": True})
    assert isinstance(h, HeteroSpace)
    assert h.small_levels == (1, 2)
    assert h.big_levels == (2, 3, 4)
