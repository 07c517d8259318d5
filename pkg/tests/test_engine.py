import json
import random
import shutil
from collections import Counter

import pytest
from scipy import stats as scipy_stats

from antsearch.engine import (
    PheromoneParams,
    RunConfig,
    SelectionParams,
    Tour,
    aco_select,
    complete_path,
    find_best,
    generate_ants,
    generate_path,
    load_checkpoint,
    resume_search,
    search,
)
from antsearch.errors import ConfigError
from antsearch.evaluation import (
    FailingEvaluator,
    LandscapeSpec,
    Metrics,
    ReuseHint,
    SyntheticEvaluator,
    WeightCache,
)
from antsearch.graph import PheromoneGraph
from antsearch.space import LayerKind


class CountingRng(random.Random):
    def __init__(self, seed=0):
        super().__init__(seed)
        self.draws = 0

    def random(self):
        self.draws += 1
        return super().random()


class TestAcoSelect:
    def test_pure_exploitation_is_argmax(self):
        rng = random.Random(0)
        params = SelectionParams(greediness=1.0, beta=1.0)
        candidates = [(0.2, 1.0), (0.9, 1.0), (0.5, 1.0)]
        assert all(aco_select(candidates, params, rng) == 1 for _ in range(10_000))

    def test_symmetric_wheel_is_even(self):
        rng = random.Random(42)
        params = SelectionParams(greediness=0.0, beta=1.0)
        counts = Counter(aco_select([(1.0, 1.0), (1.0, 1.0)], params, rng) for _ in range(10_000))
        assert abs(counts[0] / 10_000 - 0.5) < 0.02

    def test_wheel_matches_hand_computed_distribution(self):
        # weights (1, 3): heavier candidate should win 3/(1+3) of draws
        rng = random.Random(7)
        params = SelectionParams(greediness=0.0, beta=1.0)
        counts = Counter(aco_select([(1.0, 1.0), (3.0, 1.0)], params, rng) for _ in range(10_000))
        assert abs(counts[1] / 10_000 - 0.75) < 0.02

    def test_beta_exponent_shapes_wheel(self):
        # with beta=2, eta 2 vs 1 at equal tau gives 4/(4+1) for the first
        rng = random.Random(3)
        params = SelectionParams(greediness=0.0, beta=2.0)
        counts = Counter(aco_select([(1.0, 2.0), (1.0, 1.0)], params, rng) for _ in range(10_000))
        assert abs(counts[0] / 10_000 - 0.8) < 0.02

    def test_wheel_chi_square_not_rejected(self):
        rng = random.Random(11)
        params = SelectionParams(greediness=0.0, beta=1.0)
        weights = [1.0, 2.0, 5.0, 2.0]
        n = 20_000
        counts = Counter(
            aco_select([(w, 1.0) for w in weights], params, rng) for _ in range(n)
        )
        total = sum(weights)
        expected = [n * w / total for w in weights]
        observed = [counts[i] for i in range(len(weights))]
        assert scipy_stats.chisquare(observed, expected).pvalue > 0.01

    def test_greediness_interpolates_between_branches(self):
        # law of total probability: P(argmax) = q0 + (1-q0) * p_argmax
        rng = random.Random(5)
        params = SelectionParams(greediness=0.3, beta=1.0)
        counts = Counter(aco_select([(3.0, 1.0), (1.0, 1.0)], params, rng) for _ in range(10_000))
        expected = 0.3 + 0.7 * 0.75
        assert abs(counts[0] / 10_000 - expected) < 0.02

    def test_argmax_invariant_under_scaling(self):
        params = SelectionParams(greediness=1.0, beta=1.0)
        base = [(0.2, 1.0), (0.9, 1.0), (0.5, 1.0)]
        for factor in (1e-6, 1.0, 1e6):
            scaled = [(tau * factor, eta) for tau, eta in base]
            assert aco_select(scaled, params, random.Random(0)) == 1

    def test_draw_budget(self):
        params = SelectionParams(greediness=0.5, beta=1.0)
        candidates = [(1.0, 1.0), (2.0, 1.0)]
        for seed in range(200):
            rng = CountingRng(seed)
            branch_draw = random.Random(seed).random()
            aco_select(candidates, params, rng)
            assert rng.draws == (1 if branch_draw <= 0.5 else 2)

    def test_tie_breaks_to_lowest_index(self):
        params = SelectionParams(greediness=1.0, beta=1.0)
        assert aco_select([(1.0, 1.0)] * 5, params, random.Random(0)) == 0

    def test_rejects_empty_and_nonpositive(self):
        params = SelectionParams()
        with pytest.raises(ValueError):
            aco_select([], params, random.Random(0))
        with pytest.raises(ValueError):
            aco_select([(0.0, 1.0)], params, random.Random(0))
        with pytest.raises(ValueError):
            aco_select([(1.0, -1.0)], params, random.Random(0))


class TestParams:
    def test_greediness_bounds(self):
        SelectionParams(greediness=0.0)
        SelectionParams(greediness=1.0)
        with pytest.raises(ConfigError, match="greediness"):
            SelectionParams(greediness=1.5)

    def test_beta_nonnegative(self):
        with pytest.raises(ConfigError, match="beta"):
            SelectionParams(beta=-1.0)

    def test_pheromone_bounds(self):
        for kwargs in ({"rho": 0.0}, {"alpha": 1.0}, {"tau0": 0.0}):
            with pytest.raises(ConfigError):
                PheromoneParams(**kwargs)

    def test_config_bounds(self):
        with pytest.raises(ConfigError, match="ant_count"):
            RunConfig(ant_count=0)
        with pytest.raises(ConfigError, match="max_depth"):
            RunConfig(max_depth=0)

    def test_config_json_round_trip(self):
        config = RunConfig(ant_count=4, max_depth=2, seed=9)
        assert RunConfig.from_json_dict(config.to_json_dict()) == config

    def test_unknown_config_field_named(self):
        with pytest.raises(ConfigError, match="antz"):
            RunConfig.from_json_dict({"antz": 3})


def tour_of(kinds, choices=None):
    n = len(kinds)
    return Tour(
        node_ids=list(range(n)),
        kinds=list(kinds),
        choices=choices or [{} for _ in range(n)],
        edge_ids=list(range(n - 1)),
    )


class TestCompletePath:
    def test_conv_prefix_gets_flatten_and_output(self, space):
        tour = complete_path(tour_of([LayerKind.INPUT, LayerKind.CONV2D]), space)
        assert tour.suffix == [LayerKind.FLATTEN, LayerKind.OUTPUT]

    def test_dense_prefix_gets_output_only(self, space):
        tour = complete_path(
            tour_of([LayerKind.INPUT, LayerKind.FLATTEN, LayerKind.DENSE]), space
        )
        assert tour.suffix == [LayerKind.OUTPUT]

    def test_already_complete_untouched(self, space):
        tour = complete_path(tour_of([LayerKind.INPUT, LayerKind.CONV2D]), space)
        suffix = list(tour.suffix)
        assert complete_path(tour, space).suffix == suffix

    def test_bare_input_still_completes(self, space):
        tour = complete_path(tour_of([LayerKind.INPUT]), space)
        assert tour.suffix == [LayerKind.FLATTEN, LayerKind.OUTPUT]


class TestGeneratePath:
    def test_tours_always_validate(self, space):
        g = PheromoneGraph(space, 0.1)
        rng = random.Random(1)
        params = SelectionParams(greediness=0.5)
        for depth in (1, 2, 3):
            for _ in range(20):
                tour = generate_path(g, space, params, rng)
                descriptor = tour.to_descriptor(space, (28, 28, 1))
                assert space.validate(descriptor).ok
            g.increase_depth()

    def test_greedy_walk_takes_first_listed_everywhere(self, space):
        g = PheromoneGraph(space, 0.1)
        g.increase_depth()
        g.increase_depth()
        tour = generate_path(g, space, SelectionParams(greediness=1.0), random.Random(0))
        assert tour.kinds == [LayerKind.INPUT] + [LayerKind.CONV2D] * 3
        assert all(
            c == {"filter_count": 16, "kernel_size": 1} for c in tour.choices[1:]
        )

    def test_walk_length_matches_ceiling(self, space):
        g = PheromoneGraph(space, 0.1)
        g.increase_depth()
        tour = generate_path(g, space, SelectionParams(greediness=1.0), random.Random(0))
        assert tour.walk_depth == 2

    def test_seeded_determinism(self, space):
        params = SelectionParams(greediness=0.4)
        tours = []
        for _ in range(2):
            g = PheromoneGraph(space, 0.1)
            g.increase_depth()
            rng = random.Random(123)
            tours.append(generate_path(g, space, params, rng))
        assert tours[0].kinds == tours[1].kinds
        assert tours[0].choices == tours[1].choices


class BiasedHeuristic:
    """Expert-knowledge hook: strongly prefer one kind and one option."""

    def edge(self, src, dst):
        return 50.0 if dst is LayerKind.DROPOUT else 1.0

    def attribute(self, kind, name, option):
        return 50.0 if (name, option) == ("rate", 0.5) else 1.0


class TestHeuristicProvider:
    def test_heuristic_steers_fresh_argmax(self, space):
        # with uniform pheromone the eta term alone decides exploitation
        g = PheromoneGraph(space, 0.1, BiasedHeuristic())
        tour = generate_path(g, space, SelectionParams(greediness=1.0), random.Random(0))
        assert tour.kinds[1] is LayerKind.DROPOUT
        assert tour.choices[1] == {"rate": 0.5}

    def test_beta_zero_disables_heuristic(self, space):
        g = PheromoneGraph(space, 0.1, BiasedHeuristic())
        tour = generate_path(
            g, space, SelectionParams(greediness=1.0, beta=0.0), random.Random(0)
        )
        # back to pure pheromone ties: first-listed wins
        assert tour.kinds[1] is LayerKind.CONV2D


class TestGenerateAnts:
    def test_single_ant_applies_local_update_once(self, space):
        g = PheromoneGraph(space, 0.1)
        config = RunConfig(ant_count=1, max_depth=1, seed=0)
        landscape = LandscapeSpec.random(0, space, deviations=0)
        tours = generate_ants(
            g, space, config, random.Random(0), SyntheticEvaluator(landscape, space)
        )
        assert len(tours) == 1
        edge = g.edge(tours[0].edge_ids[0])
        rho, tau0 = config.pheromone.rho, config.pheromone.tau0
        assert edge.pheromone == pytest.approx(tau0 + rho * (tau0 - tau0))

    def test_ant_count_respected_and_metrics_attached(self, space):
        g = PheromoneGraph(space, 0.1)
        config = RunConfig(ant_count=4, max_depth=1, seed=1)
        landscape = LandscapeSpec.random(1, space, deviations=2)
        tours = generate_ants(
            g, space, config, random.Random(1), SyntheticEvaluator(landscape, space)
        )
        assert len(tours) == 4
        assert all(t.metrics is not None for t in tours)

    def test_all_failing_evaluator_degrades_to_zero_scores(self, space):
        g = PheromoneGraph(space, 0.1)
        config = RunConfig(ant_count=4, max_depth=1, seed=2)
        evaluator = FailingEvaluator("OOM")
        tours = generate_ants(g, space, config, random.Random(2), evaluator)
        assert evaluator.calls == 4
        assert [t.accuracy for t in tours] == [0.0] * 4
        assert all(t.error for t in tours)

    def test_reuse_hints_flow_from_cache(self, space):
        g = PheromoneGraph(space, 0.1)
        config = RunConfig(ant_count=6, max_depth=1, seed=3)
        landscape = LandscapeSpec.random(3, space, deviations=0)
        seen = []

        class Probe:
            def evaluate(self, descriptor, reuse):
                seen.append(reuse)
                return Metrics(accuracy=0.5, reused_prefix_len=reuse.prefix_len)

        cache = WeightCache(space)
        generate_ants(g, space, config, random.Random(3), Probe(), cache)
        assert seen[0] == ReuseHint(0, None)
        # later ants share at least the Input layer with something cached
        assert any(h.prefix_len >= 1 and h.key for h in seen[1:])


class TestFindBest:
    def _tour(self, score):
        t = tour_of([LayerKind.INPUT])
        t.metrics = Metrics(accuracy=score)
        return t

    def test_picks_maximum(self):
        tours = [self._tour(0.3), self._tour(0.9), self._tour(0.5)]
        assert find_best(tours) is tours[1]

    def test_tie_goes_to_earlier(self):
        tours = [self._tour(0.7), self._tour(0.7)]
        assert find_best(tours) is tours[0]

    def test_single(self):
        tours = [self._tour(0.2)]
        assert find_best(tours) is tours[0]

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            find_best([])


class TestSearch:
    def test_evaluation_budget_is_exact(self, space):
        calls = []

        class Probe:
            def evaluate(self, descriptor, reuse):
                calls.append(1)
                return Metrics(accuracy=0.5)

        config = RunConfig(ant_count=3, max_depth=2, seed=0)
        result = search(config, evaluator=Probe(), space=space)
        assert len(calls) == 6
        assert result.evaluations == 6

    def test_minimal_run_counts(self, space):
        rounds = []
        config = RunConfig(ant_count=2, max_depth=1, seed=0)
        result = search(
            config,
            evaluator=SyntheticEvaluator(LandscapeSpec.random(0, space), space),
            space=space,
            on_round=lambda r, t: rounds.append(r),
        )
        assert result.evaluations == 2
        assert rounds == [1]

    def test_incumbent_never_degrades(self, space):
        history = []
        config = RunConfig(ant_count=4, max_depth=3, seed=5)
        search(
            config,
            evaluator=SyntheticEvaluator(LandscapeSpec.random(5, space, deviations=2), space),
            space=space,
            on_round=lambda r, t: history.append(t.accuracy),
        )
        assert history == sorted(history)

    def test_same_seed_same_everything(self, space, tmp_path):
        config = RunConfig(ant_count=4, max_depth=3, seed=11)
        dirs = [tmp_path / "a", tmp_path / "b"]
        results = [
            search(config, space=space, out_dir=d)
            for d in dirs
        ]
        assert (
            results[0].best.to_json_dict() == results[1].best.to_json_dict()
        )
        final = "checkpoint_round_3.json"
        assert (dirs[0] / final).read_bytes() == (dirs[1] / final).read_bytes()

    def test_different_seeds_usually_differ(self, space):
        config_a = RunConfig(ant_count=4, max_depth=2, seed=1)
        config_b = RunConfig(ant_count=4, max_depth=2, seed=2)
        landscape = LandscapeSpec.random(9, space, deviations=3)
        tours = [
            search(c, evaluator=SyntheticEvaluator(landscape, space), space=space).best
            for c in (config_a, config_b)
        ]
        assert tours[0].to_json_dict() != tours[1].to_json_dict()

    def test_stats_rows_are_emitted_per_ant(self, space):
        rows = []
        config = RunConfig(ant_count=3, max_depth=2, seed=4)
        search(config, space=space, stats=rows.append)
        assert len(rows) == 6
        assert [r["round"] for r in rows] == [1, 1, 1, 2, 2, 2]
        assert [r["depth"] for r in rows] == [1, 1, 1, 2, 2, 2]
        assert all(set(r) == {"round", "ant_index", "depth", "score", "architecture", "wall_ms"}
                   for r in rows)


class TestCheckpointResume:
    def test_interrupt_and_resume_equals_uninterrupted(self, space, tmp_path):
        config = RunConfig(ant_count=4, max_depth=3, seed=21)
        full_dir = tmp_path / "full"
        full_result = search(config, space=space, out_dir=full_dir)

        resumed_dir = tmp_path / "resumed"
        resumed_dir.mkdir()
        shutil.copy(full_dir / "checkpoint_round_1.json", resumed_dir / "checkpoint_round_1.json")
        resumed_result = resume_search(
            resumed_dir / "checkpoint_round_1.json", space=space, out_dir=resumed_dir
        )
        assert resumed_result is not None
        assert resumed_result.best.to_json_dict() == full_result.best.to_json_dict()
        assert (
            (full_dir / "checkpoint_round_3.json").read_bytes()
            == (resumed_dir / "checkpoint_round_3.json").read_bytes()
        )

    def test_resume_of_finished_run_is_noop(self, space, tmp_path):
        config = RunConfig(ant_count=2, max_depth=2, seed=8)
        search(config, space=space, out_dir=tmp_path)
        assert resume_search(tmp_path / "checkpoint_round_2.json", space=space) is None

    def test_corrupt_checkpoint_refused(self, space, tmp_path):
        bad = tmp_path / "checkpoint_round_1.json"
        bad.write_text("{not json")
        from antsearch.errors import CheckpointError

        with pytest.raises(CheckpointError):
            load_checkpoint(bad, space)

    def test_schema_version_mismatch_refused_with_hint(self, space, tmp_path):
        config = RunConfig(ant_count=2, max_depth=1, seed=8)
        search(config, space=space, out_dir=tmp_path)
        path = tmp_path / "checkpoint_round_1.json"
        data = json.loads(path.read_text())
        data["schema_version"] = 99
        path.write_text(json.dumps(data))
        from antsearch.errors import CheckpointError

        with pytest.raises(CheckpointError, match="schema version"):
            load_checkpoint(path, space)

    def test_rng_state_round_trips_exactly(self, space, tmp_path):
        config = RunConfig(ant_count=2, max_depth=2, seed=13)
        search(config, space=space, out_dir=tmp_path)
        state = load_checkpoint(tmp_path / "checkpoint_round_1.json", space)
        rng = random.Random()
        rng.setstate(state.rng_state)
        assert isinstance(rng.random(), float)
