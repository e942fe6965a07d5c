#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "probe/denoiser.hpp"
#include "probe/rng.hpp"
#include "probe/tensor.hpp"
#include "probe/text_encoder.hpp"

namespace probe {

// A labeled synthetic concept: a spatial template animated by a cyclic
// per-frame translation, observed under additive gaussian noise.
struct ConceptSpec {
  int id = 0;
  std::string name;
  Tensor templ;  // H x W x C
  int shift_y = 0;
  int shift_x = 1;
  double noise_level = 0.1;
};

enum class Split { train, reference, eval };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::reference: return "reference";
    default: return "eval";
  }
}

struct DatasetItem {
  std::uint64_t id = 0;
  Tensor latent;
  int concept_id = 0;
  std::vector<TokenId> prompt;
  std::string generator_digest;  // digest of whatever produced the latent
};

struct Dataset {
  Split split = Split::train;
  std::vector<DatasetItem> items;
};

struct WorldConfig {
  int num_concepts = 4;
  int train_per_concept = 200;
  int eval_per_concept = 100;
  double noise = 0.1;
  // two concepts share a co-occurring context pattern on the last channel
  double context_strength = 0.7;
  std::uint64_t seed = 42;
};

inline std::vector<TokenId> concept_prompt(const Vocabulary& vocab, int concept_id) {
  return {vocab.id("a"), vocab.id("video"), vocab.id("of"),
          vocab.id("concept_" + std::to_string(concept_id))};
}

inline std::vector<ConceptSpec> make_concepts(const ModelConfig& mcfg, const WorldConfig& wcfg,
                                              Rng rng) {
  const std::size_t H = mcfg.height, W = mcfg.width, C = mcfg.channels;
  Rng ctx_rng = rng.split(1000);
  Tensor context(Shape{H, W});  // lives on the last channel
  for (auto& x : context.data) x = ctx_rng.normal();

  std::vector<ConceptSpec> specs;
  for (int k = 0; k < wcfg.num_concepts; ++k) {
    ConceptSpec spec;
    spec.id = k;
    spec.name = "concept_" + std::to_string(k);
    spec.noise_level = wcfg.noise;
    spec.shift_y = k % 2;
    spec.shift_x = 1;
    Rng cr = rng.split(1 + static_cast<std::uint64_t>(k));
    spec.templ = Tensor(Shape{H, W, C});
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t c = 0; c < C; ++c) {
          double v = cr.normal();
          if (c == C - 1) {
            v *= 0.3;
            if (k < 2) v += wcfg.context_strength * context.at2(y, x);
          }
          spec.templ.data[(y * W + x) * C + c] = v;
        }
    specs.push_back(std::move(spec));
  }
  // separability by construction; reject degenerate draws early
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t j = i + 1; j < specs.size(); ++j)
      if (std::abs(cosine(specs[i].templ, specs[j].templ)) >= 0.5)
        throw ConfigError("world: concepts " + std::to_string(i) + " and " + std::to_string(j) +
                          " are not separable (|cos| >= 0.5); choose another world seed");
  return specs;
}

inline Tensor shifted_template(const ConceptSpec& spec, const ModelConfig& mcfg, int frame) {
  const std::size_t H = mcfg.height, W = mcfg.width, C = mcfg.channels;
  Tensor out(Shape{H, W, C});
  const std::size_t dy = (static_cast<std::size_t>(spec.shift_y) * frame) % H;
  const std::size_t dx = (static_cast<std::size_t>(spec.shift_x) * frame) % W;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < C; ++c)
        out.data[(((y + dy) % H) * W + ((x + dx) % W)) * C + c] =
            spec.templ.data[(y * W + x) * C + c];
  return out;
}

inline Tensor synth_video(const ConceptSpec& spec, const ModelConfig& mcfg, Rng rng) {
  if (spec.templ.shape != Shape{mcfg.height, mcfg.width, mcfg.channels})
    throw ShapeError("synth_video: template shape " + shape_str(spec.templ.shape) +
                     " does not match model config");
  Tensor video(mcfg.latent_shape());
  const std::size_t F = mcfg.frame_dim();
  for (std::size_t j = 0; j < mcfg.frames; ++j) {
    Tensor frame = shifted_template(spec, mcfg, static_cast<int>(j));
    for (std::size_t i = 0; i < F; ++i)
      video.data[j * F + i] = frame.data[i] + spec.noise_level * rng.normal();
  }
  return video;
}

inline Dataset make_split(const std::vector<ConceptSpec>& concepts, const ModelConfig& mcfg,
                          const Vocabulary& vocab, int per_concept, Split split, Rng rng) {
  Dataset ds;
  ds.split = split;
  std::uint64_t id = 0;
  for (const auto& spec : concepts) {
    for (int n = 0; n < per_concept; ++n) {
      DatasetItem item;
      item.id = id;
      item.concept_id = spec.id;
      item.prompt = concept_prompt(vocab, spec.id);
      item.latent = synth_video(spec, mcfg, rng.split(id));
      item.generator_digest = "world";
      ds.items.push_back(std::move(item));
      ++id;
    }
  }
  return ds;
}

}  // namespace probe
