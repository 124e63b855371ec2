import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointvqa import clip_provider as cp


class TestStubEmbed:
    def test_deterministic(self):
        a = cp.stub_embed("a brown chair", "text")
        b = cp.stub_embed("a brown chair", "text")
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        v = cp.stub_embed("kitchen scene", "image")
        assert v.shape == (cp.EMBED_DIM,)
        assert np.linalg.norm(v) == pytest.approx(1.0)

    def test_modality_changes_vector(self):
        t = cp.stub_embed("same text", "text")
        i = cp.stub_embed("same text", "image")
        assert abs(float(t @ i)) < 0.5

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            cp.stub_embed("", "text")

    def test_distinct_texts_nearly_orthogonal(self):
        vecs = [cp.stub_embed(f"sentence number {i}", "text")
                for i in range(200)]
        rng = np.random.default_rng(0)
        cosines = []
        for _ in range(100):
            i, j = rng.choice(200, size=2, replace=False)
            cosines.append(abs(float(vecs[i] @ vecs[j])))
        assert max(cosines) < 0.5
        assert float(np.mean(cosines)) < 0.15

    @settings(max_examples=20, deadline=None)
    @given(st.text(alphabet="abcdefgh ", min_size=1).filter(str.strip))
    def test_norm_property(self, text):
        assert np.linalg.norm(cp.stub_embed(text, "text")) == pytest.approx(1.0)


class TestSceneEmbedding:
    def test_word_order_and_duplicates_irrelevant(self):
        a = cp.stub_scene_embedding("red chair near blue table", "text")
        b = cp.stub_scene_embedding("blue table near red chair chair", "text")
        assert np.allclose(a, b)

    def test_modalities_share_word_space(self):
        # targets for both modalities of one scene must correlate strongly
        t = cp.stub_scene_embedding("a kitchen with a red sink", "text")
        i = cp.stub_scene_embedding("a kitchen with a red sink", "image")
        assert float(t @ i) > 0.99

    def test_disjoint_scenes_decorrelated(self):
        a = cp.stub_scene_embedding("cabinet refrigerator counter", "text")
        b = cp.stub_scene_embedding("toilet bathtub curtain", "text")
        assert abs(float(a @ b)) < 0.5

    def test_punctuation_only_rejected(self):
        with pytest.raises(ValueError):
            cp.stub_scene_embedding("?!", "text")


class TestTokenizer:
    def test_worked_example(self):
        toks = cp.tokenize_question("Is it red?")
        assert toks.token_strings == (
            "<start>", "is", "it", "red", "?", "<eot>")
        assert toks.eot_index == 5
        assert toks.embeddings.shape == (6, cp.EMBED_DIM)

    def test_truncation_keeps_eot_last(self):
        text = " ".join(["word"] * 200)
        toks = cp.tokenize_question(text)
        assert toks.embeddings.shape[0] == cp.MAX_TOKENS
        assert toks.eot_index == cp.MAX_TOKENS - 1
        assert toks.token_strings[-1] == cp.EOT_TOKEN
        assert toks.token_strings[0] == cp.START_TOKEN

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            cp.tokenize_question("")

    def test_rows_unit_norm(self):
        toks = cp.tokenize_question("where is the sofa")
        norms = np.linalg.norm(toks.embeddings, axis=1)
        assert np.allclose(norms, 1.0)


class TestStore:
    def _entries(self, n=4):
        return [cp.ModalEmbedding(f"scene{i}", mod,
                                  cp.stub_embed(f"scene{i}", mod))
                for i in range(n) for mod in cp.MODALITIES]

    def test_duplicate_key_rejected(self):
        e = self._entries(1)
        with pytest.raises(ValueError, match="duplicate"):
            cp.EmbeddingStore(e + e[:1])

    def test_lookup(self):
        store = cp.EmbeddingStore(self._entries())
        assert ("scene0", "text") in store
        assert np.array_equal(store.get("scene1", "image"),
                              cp.stub_embed("scene1", "image"))

    def test_checksum_is_order_independent(self):
        e = self._entries()
        assert cp.EmbeddingStore(e).checksum() == \
            cp.EmbeddingStore(e[::-1]).checksum()

    def test_jsonl_round_trip_bit_exact(self, tmp_path):
        path = tmp_path / "emb.jsonl"
        entries = self._entries(6)
        cp.write_embeddings(path, entries)
        store = cp.load_embeddings(path)
        assert len(store) == len(entries)
        for e in entries:
            loaded = store.get(e.scene_id, e.modality)
            assert np.array_equal(loaded, e.vector)
        assert store.checksum() == cp.EmbeddingStore(entries).checksum()

    def test_load_errors_name_the_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"scene_id": "s", "modality": "text"}\n')
        with pytest.raises(ValueError, match=":1:"):
            cp.load_embeddings(path)
        path.write_text(
            '{"scene_id": "s", "modality": "text", "vector": [0.0, 1.0]}\n')
        with pytest.raises(ValueError, match="length"):
            cp.load_embeddings(path)

    def test_unknown_modality_rejected(self):
        with pytest.raises(ValueError):
            cp.ModalEmbedding("s", "audio", np.zeros(cp.EMBED_DIM))
