#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "probe/digest.hpp"
#include "probe/rng.hpp"
#include "probe/tensor.hpp"

namespace probe {

using TokenId = int;

// Token ids at or above this value address pseudo-token slots instead of
// vocabulary rows.
constexpr TokenId kPseudoSlotBase = 16384;

inline TokenId pseudo_slot(int s) { return kPseudoSlotBase + s; }
inline bool is_pseudo_slot(TokenId id) { return id >= kPseudoSlotBase; }

struct Vocabulary {
  std::vector<std::string> words;

  TokenId id(const std::string& w) const {
    for (std::size_t i = 0; i < words.size(); ++i)
      if (words[i] == w) return static_cast<TokenId>(i);
    throw ConfigError("unknown vocabulary word: " + w);
  }
  std::size_t size() const { return words.size(); }
};

inline Vocabulary make_vocabulary(int num_concepts) {
  Vocabulary v;
  v.words = {"<null>", "a",       "the",   "video", "of",    "clip",
             "scene",  "showing", "footage", "motion", "still", "frames"};
  for (int c = 0; c < num_concepts; ++c) v.words.push_back("concept_" + std::to_string(c));
  return v;
}

inline const std::vector<std::string>& neutral_descriptors() {
  static const std::vector<std::string> list = {"scene", "clip", "video", "footage", "motion"};
  return list;
}

// The m x d learnable embedding optimized during probing.
struct PseudoToken {
  Tensor rows;  // m x d
  std::string init_strategy = "random";

  std::size_t count() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }
};

using Condition = Tensor;  // vector in R^{d_c}

// Frozen embedding table + one affine/tanh mixing layer over the mean-pooled
// token rows. Pseudo-token slots are the only externally writable inputs.
struct TextEncoder {
  Vocabulary vocab;
  Tensor embeddings;  // V x d
  Tensor mix_w;       // d_c x d
  Tensor mix_b;       // d_c

  std::size_t embed_dim() const { return embeddings.cols(); }
  std::size_t cond_dim() const { return mix_b.size(); }

  static TextEncoder init(Vocabulary vocab, std::size_t d, std::size_t d_c, Rng rng) {
    TextEncoder enc;
    enc.vocab = std::move(vocab);
    Rng er = rng.split(1);
    enc.embeddings = Tensor(Shape{enc.vocab.size(), d});
    for (auto& x : enc.embeddings.data) x = er.normal();
    // the null token conditions the unconditional pathway; keep it at zero
    for (std::size_t j = 0; j < d; ++j) enc.embeddings.at2(0, j) = 0.0;
    Rng mr = rng.split(2);
    enc.mix_w = Tensor(Shape{d_c, d});
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& x : enc.mix_w.data) x = s * mr.normal();
    enc.mix_b = Tensor(Shape{d_c});
    return enc;
  }

  Tensor embedding_row(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
      throw ConfigError("unknown token id " + std::to_string(id));
    Tensor row(Shape{embed_dim()});
    for (std::size_t j = 0; j < embed_dim(); ++j) row[j] = embeddings.at2(id, j);
    return row;
  }

  double rms_row_norm() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      double n = 0.0;
      for (std::size_t j = 0; j < embed_dim(); ++j) n += embeddings.at2(i, j) * embeddings.at2(i, j);
      acc += n;
    }
    return std::sqrt(acc / static_cast<double>(vocab.size()));
  }

  std::string digest() const {
    Digest d;
    d.tensor(embeddings);
    d.tensor(mix_w);
    d.tensor(mix_b);
    return d.hex();
  }
};

inline Tensor pooled_rows(const TextEncoder& enc, const std::vector<TokenId>& tokens,
                          const PseudoToken* pseudo) {
  if (tokens.empty()) throw ConfigError("encode_prompt: empty token sequence");
  Tensor pool(Shape{enc.embed_dim()});
  for (TokenId id : tokens) {
    if (is_pseudo_slot(id)) {
      const int s = id - kPseudoSlotBase;
      if (!pseudo || static_cast<std::size_t>(s) >= pseudo->count())
        throw ConfigError("pseudo slot " + std::to_string(s) + " has no pseudo-token row");
      for (std::size_t j = 0; j < enc.embed_dim(); ++j) pool[j] += pseudo->rows.at2(s, j);
    } else {
      if (id < 0 || static_cast<std::size_t>(id) >= enc.vocab.size())
        throw ConfigError("unknown token id " + std::to_string(id));
      for (std::size_t j = 0; j < enc.embed_dim(); ++j) pool[j] += enc.embeddings.at2(id, j);
    }
  }
  return scale(pool, 1.0 / static_cast<double>(tokens.size()));
}

inline Condition encode_prompt(const TextEncoder& enc, const std::vector<TokenId>& tokens,
                               const PseudoToken* pseudo = nullptr) {
  Tensor pool = pooled_rows(enc, tokens, pseudo);
  Tensor pre = matmul(enc.mix_w, pool);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = std::tanh(pre[i] + enc.mix_b[i]);
  return pre;
}

// Gradient of a scalar loss w.r.t. the pseudo-token rows, given the gradient
// w.r.t. the produced Condition. Backpropagates through the full frozen
// encoder down to the embedding rows.
inline Tensor encode_prompt_backward(const TextEncoder& enc, const std::vector<TokenId>& tokens,
                                     const PseudoToken& pseudo, const Tensor& grad_cond) {
  Condition c = encode_prompt(enc, tokens, &pseudo);
  Tensor dpre(Shape{enc.cond_dim()});
  for (std::size_t i = 0; i < dpre.size(); ++i) dpre[i] = grad_cond[i] * (1.0 - c[i] * c[i]);
  Tensor dpool = matvec_t(enc.mix_w, dpre);
  Tensor grad_rows(pseudo.rows.shape);
  const double inv_n = 1.0 / static_cast<double>(tokens.size());
  for (TokenId id : tokens) {
    if (!is_pseudo_slot(id)) continue;
    const int s = id - kPseudoSlotBase;
    for (std::size_t j = 0; j < enc.embed_dim(); ++j)
      grad_rows.at2(s, j) += inv_n * dpool[j];
  }
  return grad_rows;
}

}  // namespace probe
