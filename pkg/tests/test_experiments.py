import json

import pytest

from xlcwi.errors import ValidationError
from xlcwi.experiments import (
    DataLayout,
    ExperimentSpec,
    assemble_training_corpus,
    load_split,
    render_grid_json,
    render_grid_text,
    run_experiment,
    run_grid,
    save_results_jsonl,
    target_parts,
)
from xlcwi.tagger import TrainingConfig


def fast_training(**overrides):
    base = dict(learning_rate=0.05, epochs=3, batch_size=8)
    base.update(overrides)
    return TrainingConfig(**base)


def make_spec(**overrides):
    fields = dict(
        train_languages=("EN",),
        target="DE",
        shots=0,
        seed=3,
        hidden_size=8,
        training=fast_training(),
    )
    fields.update(overrides)
    return ExperimentSpec(**fields)


class TestSpecValidation:
    def test_target_parts(self):
        assert target_parts("EN-W") == ("EN", "Wikipedia")
        assert target_parts("EN-WN") == ("EN", "WikiNews")
        assert target_parts("EN-N") == ("EN", "News")
        assert target_parts("DE") == ("DE", "Wikipedia")

    def test_unknown_target(self):
        with pytest.raises(ValidationError):
            make_spec(target="IT")

    def test_french_never_trains(self):
        with pytest.raises(ValidationError):
            make_spec(train_languages=("EN", "FR"))

    def test_french_shots_rejected(self):
        with pytest.raises(ValidationError):
            make_spec(target="FR", shots=1)

    def test_empty_train_languages(self):
        with pytest.raises(ValidationError):
            make_spec(train_languages=())

    def test_cell_id_stable(self):
        assert make_spec().cell_id() == make_spec().cell_id()
        assert make_spec().cell_id() != make_spec(shots=1).cell_id()


class TestAssemble:
    def test_zero_shot_excludes_target_language(self, fixture_layout):
        spec = make_spec(train_languages=("EN", "ES"), target="DE", shots=0)
        corpus = assemble_training_corpus(spec, fixture_layout, seed=0)
        assert not any(inst.language == "DE" for inst in corpus)

    def test_one_shot_adds_exactly_one(self, fixture_layout):
        spec = make_spec(train_languages=("EN",), target="DE", shots=1)
        corpus = assemble_training_corpus(spec, fixture_layout, seed=0)
        en_size = len(load_split(fixture_layout, "EN", "train"))
        assert len(corpus) == en_size + 1
        assert sum(inst.language == "DE" for inst in corpus) == 1

    def test_few_shot_count(self, fixture_layout):
        spec = make_spec(train_languages=("ES",), target="DE", shots=20)
        corpus = assemble_training_corpus(spec, fixture_layout, seed=1)
        assert sum(inst.language == "DE" for inst in corpus) == 20

    def test_shot_sampling_deterministic(self, fixture_layout):
        spec = make_spec(train_languages=("EN",), target="ES", shots=5)
        a = assemble_training_corpus(spec, fixture_layout, seed=7)
        b = assemble_training_corpus(spec, fixture_layout, seed=7)
        assert a.instances == b.instances

    def test_monolingual_target_keeps_own_data(self, fixture_layout):
        spec = make_spec(train_languages=("EN",), target="EN-W", shots=0)
        corpus = assemble_training_corpus(spec, fixture_layout, seed=0)
        assert all(inst.language == "EN" for inst in corpus)

    def test_shots_drawn_from_train_split_only(self, fixture_layout):
        spec = make_spec(train_languages=("EN",), target="DE", shots=10)
        corpus = assemble_training_corpus(spec, fixture_layout, seed=2)
        train_ids = {inst.hit_id for inst in load_split(fixture_layout, "DE", "train")}
        for inst in corpus:
            if inst.language == "DE":
                assert inst.hit_id in train_ids


@pytest.fixture(scope="module")
def de_result(fixture_layout):
    return run_experiment(make_spec(training=fast_training(epochs=5)), fixture_layout)


class TestRunExperiment:
    def test_reports_populated(self, de_result, fixture_layout):
        assert de_result.dev_macro_f1 is not None
        assert de_result.runs[0].test.counts.total == len(
            load_split(fixture_layout, "DE", "test")
        )
        assert len(de_result.runs[0].epoch_losses) == 5
        assert len(de_result.runs[0].epoch_dev_macro_f1) == 5

    def test_cross_lingual_transfer_learns(self, de_result):
        assert de_result.test_macro_f1 >= 0.75

    def test_deterministic_repeat(self, de_result, fixture_layout):
        again = run_experiment(make_spec(training=fast_training(epochs=5)), fixture_layout)
        assert again.as_dict() == de_result.as_dict()

    def test_french_target_zero_shot_without_dev(self, fixture_layout):
        result = run_experiment(make_spec(target="FR", train_languages=("ES",)), fixture_layout)
        assert result.dev_macro_f1 is None
        assert result.runs[0].dev is None
        assert 0.0 <= result.test_macro_f1 <= 1.0

    def test_multi_seed_averaging(self, fixture_layout):
        spec = make_spec(seeds=(1, 2), training=fast_training(epochs=2))
        result = run_experiment(spec, fixture_layout)
        assert result.seed_policy == "averaged"
        assert len(result.runs) == 2
        expected = (result.runs[0].test.macro_f1 + result.runs[1].test.macro_f1) / 2
        assert result.test_macro_f1 == pytest.approx(expected)

    def test_unknown_model_rejected(self, fixture_layout):
        with pytest.raises(ValidationError):
            run_experiment(make_spec(model="transformer"), fixture_layout)


class TestGrid:
    def specs(self):
        return [
            make_spec(train_languages=("EN",), target="DE"),
            make_spec(train_languages=("ES",), target="DE"),
            make_spec(train_languages=("EN",), target="ES"),
        ]

    def test_duplicate_cells_rejected(self, fixture_layout):
        with pytest.raises(ValidationError, match="duplicate"):
            run_grid([make_spec(), make_spec()], fixture_layout)

    def test_grid_runs_and_renders(self, fixture_layout, tmp_path):
        results = run_grid(self.specs(), fixture_layout)
        assert len(results) == 3

        text = render_grid_text(results)
        assert "DEV" in text and "TEST" in text
        doc = json.loads(render_grid_json(results))
        assert doc["columns"] == ["EN-W", "EN-WN", "EN-N", "DE", "ES", "FR"]
        # one row per train-language combination, targets fill the columns
        assert len(doc["rows"]) == 2
        assert sum(len(row["test"]) for row in doc["rows"]) == 3

        # column maxima match a brute-force recomputation
        de_values = [
            row["test"]["DE"] for row in doc["rows"] if "DE" in row["test"]
        ]
        assert doc["column_max"]["test"]["DE"] == max(de_values)
        starred = [line for line in text.splitlines() if "*" in line]
        assert starred, "maxima should be starred in the text table"

        # rendering is a pure function of the results
        assert render_grid_text(results) == text
        assert render_grid_json(results) == render_grid_json(results)

        out = tmp_path / "reports.jsonl"
        save_results_jsonl(results, out)
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 3
        for line in lines:
            parsed = json.loads(line)
            assert parsed["schema_version"] == 1

        # grids re-assemble identically from the persisted reports
        from xlcwi.experiments import load_results_jsonl

        reloaded = load_results_jsonl(out)
        assert render_grid_json(reloaded) == render_grid_json(results)
        assert render_grid_text(reloaded) == text

    def test_single_cell_grid(self, fixture_layout):
        results = run_grid([make_spec()], fixture_layout)
        doc = json.loads(render_grid_json(results))
        assert len(doc["rows"]) == 1

    def test_parallel_workers_match_sequential(self, fixture_layout):
        specs = self.specs()[:2]
        sequential = run_grid(specs, fixture_layout, workers=1)
        parallel = run_grid(specs, fixture_layout, workers=2)
        assert [r.as_dict() for r in sequential] == [r.as_dict() for r in parallel]

    def test_empty_grid_rejected(self, fixture_layout):
        with pytest.raises(ValidationError):
            run_grid([], fixture_layout)


def test_missing_corpus_path_errors(tmp_path, fixture_layout):
    from xlcwi.errors import MissingResourceError

    bad_layout = DataLayout(tmp_path, fixture_layout.embeddings_root)
    with pytest.raises(MissingResourceError):
        load_split(bad_layout, "EN", "train")
