#include "doctest.h"

#include <map>
#include <set>

#include "probe/digest.hpp"
#include "probe/world.hpp"

using namespace probe;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.frames = 4;
  cfg.height = 3;
  cfg.width = 3;
  cfg.channels = 2;
  cfg.embed_dim = 5;
  cfg.cond_dim = 4;
  cfg.hidden = 6;
  cfg.attn_dim = 3;
  return cfg;
}

}  // namespace

TEST_CASE("noiseless static concept renders identical frames") {
  ModelConfig mcfg = tiny_config();
  ConceptSpec spec;
  spec.templ = Rng(3).normal_tensor(Shape{mcfg.height, mcfg.width, mcfg.channels});
  spec.shift_y = 0;
  spec.shift_x = 0;
  spec.noise_level = 0.0;
  Tensor v = synth_video(spec, mcfg, Rng(1));
  const std::size_t F = mcfg.frame_dim();
  for (std::size_t j = 0; j < mcfg.frames; ++j)
    for (std::size_t i = 0; i < F; ++i)
      CHECK(v.data[j * F + i] == spec.templ.data[i]);
}

TEST_CASE("unit translation shifts each frame cyclically") {
  ModelConfig mcfg = tiny_config();
  ConceptSpec spec;
  spec.templ = Rng(3).normal_tensor(Shape{mcfg.height, mcfg.width, mcfg.channels});
  spec.shift_y = 0;
  spec.shift_x = 1;
  spec.noise_level = 0.0;
  Tensor v = synth_video(spec, mcfg, Rng(1));

  const std::size_t H = mcfg.height, W = mcfg.width, C = mcfg.channels, F = mcfg.frame_dim();
  for (std::size_t j = 0; j < mcfg.frames; ++j)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t xs = (x + W - (j % W)) % W;  // inverse of shifting by j
          const double expect = v.data[0 * F + (y * W + xs) * C + c];
          CHECK(v.data[j * F + (y * W + x) * C + c] == doctest::Approx(expect));
        }
}

TEST_CASE("video synthesis is deterministic per seed") {
  ModelConfig mcfg = tiny_config();
  ConceptSpec spec;
  spec.templ = Rng(3).normal_tensor(Shape{mcfg.height, mcfg.width, mcfg.channels});
  spec.noise_level = 0.1;
  Digest d1, d2, d3;
  d1.tensor(synth_video(spec, mcfg, Rng(42)));
  d2.tensor(synth_video(spec, mcfg, Rng(42)));
  d3.tensor(synth_video(spec, mcfg, Rng(43)));
  CHECK(d1.hex() == d2.hex());
  CHECK(d1.hex() != d3.hex());
}

TEST_CASE("synth_video rejects mismatched template dimensions") {
  ModelConfig mcfg = tiny_config();
  ConceptSpec spec;
  spec.templ = Tensor(Shape{2, 2, 1});
  CHECK_THROWS_AS(synth_video(spec, mcfg, Rng(1)), ShapeError);
}

TEST_CASE("concepts are pairwise separable and share the context channel") {
  ModelConfig mcfg = tiny_config();
  WorldConfig wcfg;
  wcfg.num_concepts = 4;
  auto concepts = make_concepts(mcfg, wcfg, Rng(5));
  REQUIRE(concepts.size() == 4);
  for (std::size_t a = 0; a < concepts.size(); ++a)
    for (std::size_t b = a + 1; b < concepts.size(); ++b)
      CHECK(std::abs(cosine(concepts[a].templ, concepts[b].templ)) < 0.5);

  // concepts 0 and 1 share a dominant co-occurring pattern on the last
  // channel; later concepts only carry their own weak channel content
  const std::size_t C = mcfg.channels;
  auto last_channel = [&](int k) {
    Tensor ch(Shape{mcfg.height * mcfg.width});
    for (std::size_t y = 0; y < mcfg.height; ++y)
      for (std::size_t x = 0; x < mcfg.width; ++x)
        ch[y * mcfg.width + x] = concepts[k].templ.data[(y * mcfg.width + x) * C + (C - 1)];
    return ch;
  };
  CHECK(cosine(last_channel(0), last_channel(1)) > 0.5);
  CHECK(mean_sq(last_channel(2)) < mean_sq(last_channel(0)));
  CHECK(mean_sq(last_channel(3)) < mean_sq(last_channel(1)));
}

TEST_CASE("dataset splits carry labels, prompts, and unique ids") {
  ModelConfig mcfg = tiny_config();
  WorldConfig wcfg;
  wcfg.num_concepts = 3;
  Vocabulary vocab = make_vocabulary(wcfg.num_concepts);
  auto concepts = make_concepts(mcfg, wcfg, Rng(5));
  Dataset ds = make_split(concepts, mcfg, vocab, 5, Split::eval, Rng(9));

  CHECK(ds.split == Split::eval);
  CHECK(ds.items.size() == 15);
  std::set<std::uint64_t> ids;
  std::map<int, int> per_concept;
  for (const auto& item : ds.items) {
    ids.insert(item.id);
    per_concept[item.concept_id]++;
    CHECK(item.latent.shape == mcfg.latent_shape());
    CHECK(item.prompt == concept_prompt(vocab, item.concept_id));
    ensure_finite(item.latent, "dataset latent");
  }
  CHECK(ids.size() == 15);
  for (int k = 0; k < 3; ++k) CHECK(per_concept[k] == 5);

  Dataset again = make_split(concepts, mcfg, vocab, 5, Split::eval, Rng(9));
  for (std::size_t i = 0; i < ds.items.size(); ++i)
    CHECK(ds.items[i].latent.data == again.items[i].latent.data);
}
