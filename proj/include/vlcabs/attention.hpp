#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vlcabs/container.hpp"
#include "vlcabs/errors.hpp"
#include "vlcabs/tensor.hpp"

namespace vlcabs {

// Learnable log-scale temperature. The score scale exp(tau) is clamped to
// kMaxScale during training; unclamped it can diverge under the
// multi-positive loss.
struct Temperature {
    float tau = 0.0f;

    static constexpr double kMaxScale = 100.0;

    // log(1/0.07), the CLIP-lineage initial value
    static Temperature clip_default() {
        return Temperature{static_cast<float>(std::log(1.0 / 0.07))};
    }

    double scale() const {
        const double s = std::exp(static_cast<double>(tau));
        return s > kMaxScale ? kMaxScale : s;
    }
};

// cosine is the library default; dot is an ablation that skips every
// l2-normalization in the score path
enum class SimilarityKind { cosine, dot };

// Scaled patch-sentence scores s_k for k = 0..L (k = 0 is CLS).
struct PatchScores {
    std::vector<float> scores;
    std::size_t patch_count() const { return scores.empty() ? 0 : scores.size() - 1; }
};

// Softmax of the scores over k; a probability vector of length L+1.
struct AttentionWeights {
    std::vector<float> weights;
};

struct SimilarityLogit {
    float value = 0.0f;
};

// The spatial part of the scores: k = 1..L only, CLS excluded.
struct PatchSimilarityMap {
    std::vector<float> scores;
    std::size_t grid_side = 0;

    Grid2D as_grid() const {
        Grid2D g(grid_side, grid_side);
        g.values = scores;
        return g;
    }
};

namespace detail {

// Per-pair forward in scalar type T with 64-bit reductions. `tokens` is
// the (L+1) x D stack (row 0 = CLS); `sentence` is the D-dim embedding.
// For cosine, rows and sentence are normalized first; for the dot
// ablation they are used raw.
template <typename T>
struct PairForwardT {
    std::vector<T> scores;          // L+1
    std::vector<T> weights;         // L+1
    std::vector<T> attended;        // D, pre-normalization weighted sum
    double attended_norm = 0.0;
    std::vector<T> attended_unit;   // D (== attended for dot kind)
    T logit = T{};
};

// Normalized token rows plus their norms; shared across the sentences
// scored against one image.
template <typename T>
struct NormalizedTokensT {
    MatrixT<T> unit_rows;        // (L+1) x D
    std::vector<double> norms;   // L+1
};

template <typename T>
NormalizedTokensT<T> normalize_tokens(const MatrixT<T>& tokens) {
    NormalizedTokensT<T> out;
    out.unit_rows = MatrixT<T>(tokens.rows, tokens.cols);
    out.norms.resize(tokens.rows);
    for (std::size_t k = 0; k < tokens.rows; ++k) {
        out.norms[k] = l2_normalize_to<T>(tokens.row(k), out.unit_rows.row(k));
    }
    return out;
}

template <typename T>
PairForwardT<T> pair_forward(const MatrixT<T>& tokens,
                             const NormalizedTokensT<T>* normalized,
                             std::span<const T> sentence_unit, double scale,
                             SimilarityKind kind) {
    const std::size_t n_tokens = tokens.rows;
    PairForwardT<T> fwd;
    fwd.scores.resize(n_tokens);
    for (std::size_t k = 0; k < n_tokens; ++k) {
        const auto row = kind == SimilarityKind::cosine ? normalized->unit_rows.row(k)
                                                        : tokens.row(k);
        fwd.scores[k] = static_cast<T>(dot_acc<T, T>(row, sentence_unit) * scale);
    }

    fwd.weights = fwd.scores;
    softmax_inplace<T>(fwd.weights);

    // weighted sum over the raw (un-normalized) token rows
    fwd.attended.assign(tokens.cols, T{});
    for (std::size_t k = 0; k < n_tokens; ++k) {
        const T w = fwd.weights[k];
        const auto row = tokens.row(k);
        for (std::size_t d = 0; d < tokens.cols; ++d) {
            fwd.attended[d] += w * row[d];
        }
    }

    if (kind == SimilarityKind::cosine) {
        fwd.attended_unit.resize(tokens.cols);
        fwd.attended_norm =
            l2_normalize_to<T>(std::span<const T>(fwd.attended), fwd.attended_unit);
    } else {
        fwd.attended_unit = fwd.attended;
        fwd.attended_norm = 1.0;
    }
    fwd.logit = static_cast<T>(
        dot_acc<T, T>(std::span<const T>(fwd.attended_unit), sentence_unit) * scale);
    return fwd;
}

}  // namespace detail

// --- public single-pair operations (32-bit storage, 64-bit reductions) ---

inline PatchScores patch_scores(const PatchEmbeddingSet& image,
                                const SentenceEmbedding& sentence,
                                const Temperature& temp,
                                SimilarityKind kind = SimilarityKind::cosine) {
    if (sentence.embedding.size() != image.dim()) {
        throw DimensionMismatchError("patch_scores: sentence dim " +
                                     std::to_string(sentence.embedding.size()) +
                                     " != image dim " + std::to_string(image.dim()));
    }
    const DenseMatrix tokens = image.tokens();
    const double scale = temp.scale();

    PatchScores out;
    out.scores.resize(tokens.rows);
    if (kind == SimilarityKind::cosine) {
        const std::vector<float> t_unit = l2_normalize(sentence.embedding);
        std::vector<float> row_unit(tokens.cols);
        for (std::size_t k = 0; k < tokens.rows; ++k) {
            l2_normalize_to<float>(tokens.row(k), row_unit);
            out.scores[k] = static_cast<float>(
                dot_acc<float, float>(row_unit, t_unit) * scale);
        }
    } else {
        for (std::size_t k = 0; k < tokens.rows; ++k) {
            out.scores[k] = static_cast<float>(
                dot_acc<float, float>(tokens.row(k),
                                      std::span<const float>(sentence.embedding)) *
                scale);
        }
    }
    return out;
}

inline AttentionWeights attention_weights(const PatchScores& scores) {
    check_finite(std::span<const float>(scores.scores), "patch scores");
    AttentionWeights out;
    out.weights = scores.scores;
    softmax_inplace<float>(out.weights);
    return out;
}

inline std::vector<float> attended_embedding(const AttentionWeights& weights,
                                             const PatchEmbeddingSet& image) {
    const DenseMatrix tokens = image.tokens();
    if (weights.weights.size() != tokens.rows) {
        throw DimensionMismatchError("attended_embedding: weight length " +
                                     std::to_string(weights.weights.size()) +
                                     " != token count " + std::to_string(tokens.rows));
    }
    std::vector<double> acc(tokens.cols, 0.0);
    for (std::size_t k = 0; k < tokens.rows; ++k) {
        const double w = weights.weights[k];
        const auto row = tokens.row(k);
        for (std::size_t d = 0; d < tokens.cols; ++d) {
            acc[d] += w * static_cast<double>(row[d]);
        }
    }
    std::vector<float> sum(tokens.cols);
    for (std::size_t d = 0; d < tokens.cols; ++d) {
        sum[d] = static_cast<float>(acc[d]);
    }
    return l2_normalize(sum);  // ZeroNorm on degenerate cancellation
}

inline SimilarityLogit global_logit(std::span<const float> attended_unit,
                                    const SentenceEmbedding& sentence,
                                    const Temperature& temp,
                                    SimilarityKind kind = SimilarityKind::cosine) {
    if (sentence.embedding.size() != attended_unit.size()) {
        throw DimensionMismatchError("global_logit: dim mismatch");
    }
    const double scale = temp.scale();
    double dot;
    if (kind == SimilarityKind::cosine) {
        const std::vector<float> t_unit = l2_normalize(sentence.embedding);
        dot = dot_acc<float, float>(attended_unit, t_unit);
    } else {
        dot = dot_acc<float, float>(attended_unit,
                                    std::span<const float>(sentence.embedding));
    }
    return SimilarityLogit{static_cast<float>(dot * scale)};
}

// Drops the CLS score (index 0) and keeps the patch scores in order.
inline PatchSimilarityMap similarity_map(const PatchScores& scores,
                                         std::size_t grid_side) {
    if (scores.scores.empty()) {
        throw DimensionMismatchError("similarity_map: empty scores");
    }
    const std::size_t patches = scores.scores.size() - 1;
    if (grid_side * grid_side != patches) {
        throw GeometryMismatchError("similarity_map: grid_side^2 != patch count");
    }
    PatchSimilarityMap map;
    map.grid_side = grid_side;
    map.scores.assign(scores.scores.begin() + 1, scores.scores.end());
    return map;
}

inline PatchSimilarityMap similarity_map(const PatchScores& scores) {
    const std::size_t patches = scores.patch_count();
    const auto side = static_cast<std::size_t>(
        std::llround(std::sqrt(static_cast<double>(patches))));
    return similarity_map(scores, side);
}

// Full per-pair path as one call: scores -> weights -> attended -> logit.
inline SimilarityLogit pair_logit(const PatchEmbeddingSet& image,
                                  const SentenceEmbedding& sentence,
                                  const Temperature& temp,
                                  SimilarityKind kind = SimilarityKind::cosine) {
    const PatchScores s = patch_scores(image, sentence, temp, kind);
    const AttentionWeights a = attention_weights(s);
    if (kind == SimilarityKind::cosine) {
        const std::vector<float> attended = attended_embedding(a, image);
        return global_logit(attended, sentence, temp, kind);
    }
    // dot ablation: raw weighted sum, no normalization of either side
    const DenseMatrix tokens = image.tokens();
    std::vector<double> acc(tokens.cols, 0.0);
    for (std::size_t k = 0; k < tokens.rows; ++k) {
        const auto row = tokens.row(k);
        for (std::size_t d = 0; d < tokens.cols; ++d) {
            acc[d] += static_cast<double>(a.weights[k]) * row[d];
        }
    }
    std::vector<float> attended(tokens.cols);
    for (std::size_t d = 0; d < tokens.cols; ++d) {
        attended[d] = static_cast<float>(acc[d]);
    }
    return global_logit(attended, sentence, temp, kind);
}

// B x N_T similarity logit table. Rows follow batch.images, columns follow
// the flat sentence list. Token rows and sentence embeddings are
// normalized once per image/sentence; the per-entry arithmetic is the
// same kernel the single-pair path uses, so entries match per-pair calls.
inline DenseMatrix logit_matrix(const PairedBatch& batch, const Temperature& temp,
                                SimilarityKind kind = SimilarityKind::cosine) {
    batch.validate();
    const std::size_t B = batch.batch_size();
    const std::size_t n_t = batch.total_sentences();
    const double scale = temp.scale();

    // sentence units, computed once
    std::vector<std::vector<float>> sentence_units(n_t);
    for (std::size_t q = 0; q < n_t; ++q) {
        sentence_units[q] = kind == SimilarityKind::cosine
                                ? l2_normalize(batch.sentences[q].embedding)
                                : batch.sentences[q].embedding;
    }

    DenseMatrix logits(B, n_t);
    for (std::size_t i = 0; i < B; ++i) {
        const DenseMatrix tokens = batch.images[i].tokens();
        detail::NormalizedTokensT<float> normalized;
        if (kind == SimilarityKind::cosine) {
            normalized = detail::normalize_tokens(tokens);
        }
        for (std::size_t q = 0; q < n_t; ++q) {
            if (batch.sentences[q].embedding.size() != tokens.cols) {
                throw DimensionMismatchError("logit_matrix: sentence dim mismatch");
            }
            const auto fwd = detail::pair_forward<float>(
                tokens, &normalized, std::span<const float>(sentence_units[q]),
                scale, kind);
            logits.at(i, q) = fwd.logit;
        }
    }
    return logits;
}

}  // namespace vlcabs
