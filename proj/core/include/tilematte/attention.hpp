#pragma once

#include <vector>

#include "tilematte/autodiff.hpp"
#include "tilematte/rng.hpp"
#include "tilematte/tensor.hpp"
#include "tilematte/tiling.hpp"
#include "tilematte/trimap.hpp"

namespace tilematte {

/// 1x1 convolution parameters.
struct Conv1x1 {
    Tensor weight; ///< [out_channels, in_channels]
    Tensor bias;   ///< [out_channels]
};

/// Embeddings of the cross-patch context module: one shared key embedding
/// applied to both query and context features, and separate value
/// embeddings for the query and for the contexts.
struct Embeddings {
    Conv1x1 key;           // shared, produces q and c_i
    Conv1x1 query_value;   // produces the query value map
    Conv1x1 context_value; // produces context value maps

    int in_channels() const { return key.weight.dim(1); }
    int key_channels() const { return key.weight.dim(0); }
    int value_channels() const { return query_value.weight.dim(0); }
};

Embeddings init_embeddings(int in_channels, int key_channels, int value_channels, Rng& rng);

enum class EmbedRole { Query, Context };

/// Key/value maps of one encoded patch plus its trimap at feature
/// resolution.
struct KeyedPatch {
    Tensor key;    ///< [C_key, h, w]
    Tensor value;  ///< [C_val, h, w]
    Trimap trimap; ///< h x w
    PatchSpec spec;
};

/// Scored candidate set for one query patch.
struct ContextPool {
    std::vector<KeyedPatch> candidates; ///< never contains the query itself
    std::vector<double> scores;         ///< softmax-normalized, sums to 1
    std::vector<int> plan_indices;      ///< candidate identity in the patch plan
};

/// key/value maps from encoder features through the 1x1 embeddings. The
/// trimap and spec fields of the result are left empty for the caller.
KeyedPatch embed(const Tensor& features, EmbedRole role, const Embeddings& emb);

/// Zeroes all positions whose trimap label differs from region.
Tensor mask_to_region(const Tensor& map, const Trimap& feature_trimap, Region region);

/// Context correlation: sum over all position pairs of the dot product
/// between the masked query key and the context key. By bilinearity this
/// equals dot(sum_s q_s, sum_s' c_s'), which is how it is computed.
double correlation(const Tensor& masked_query_key, const Tensor& context_key);

/// Softmax with max-subtraction over raw correlation values.
std::vector<double> score_pool(const std::vector<double>& correlations);

/// Indices of the K largest scores in descending order; ties break toward
/// the smaller index. Returns all indices when K >= size.
std::vector<int> select_topk(const std::vector<double>& scores, int k);

/// Trimap-guided non-local operation. For each region R in {U, F, B} and
/// each query position s in U:
///   f_R[s] = qv[s] + sum over (context i, position s' with label R) of
///            softmax-weighted context values,
/// where the softmax support is restricted to region-R positions across
/// all contexts. Positions outside U emit 0; a region empty in every
/// context falls back to f_R[s] = qv[s]. Output is the channel
/// concatenation [f_U | f_F | f_B].
Tensor tgnl(const KeyedPatch& query, const std::vector<KeyedPatch>& contexts);

/// Same contract as tgnl, computed with explicit nested loops over query
/// positions, contexts, context positions and regions. Intended as a
/// verification oracle on small inputs.
Tensor tgnl_reference(const KeyedPatch& query, const std::vector<KeyedPatch>& contexts);

/// Degenerate single-patch case (no other patches exist): every branch is
/// the query value masked to U.
Tensor tgnl_without_contexts(const KeyedPatch& query);

/// Attention weights of one query feature position over region-R positions
/// of each context (zero elsewhere). The sum over all returned maps is 1
/// when region R is nonempty somewhere. The query position must be U.
std::vector<Gray> attention_weights(const KeyedPatch& query,
                                    const std::vector<KeyedPatch>& contexts, int position_row,
                                    int position_col, Region region);

/// Differentiable version of tgnl over graph values (keys/values as CHW
/// tensors on the tape); trimaps are plain data.
ad::Value tgnl_graph(ad::Tape& t, const ad::Value& query_key, const ad::Value& query_value,
                     const Trimap& query_trimap, const std::vector<ad::Value>& context_keys,
                     const std::vector<ad::Value>& context_values,
                     const std::vector<Trimap>& context_trimaps);

} // namespace tilematte
