#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gcl/dataset.hpp"
#include "gcl/encoder.hpp"
#include "gcl/multifield.hpp"

namespace gcl {

using FieldEncoder = std::variant<TextEncoderParams, DenseEncoderParams>;

struct ModelConfig {
  std::size_t buckets = kDefaultBuckets;
  std::size_t dim = kDefaultEmbedDim;
  /// Share one text encoder between the first LHS text field and the first
  /// RHS text field (query text and document title).
  bool tie_text_encoders = false;
};

/// One encoder per field (E_j). Tied fields point at the same encoder.
struct Model {
  FieldSchema schema;
  std::size_t dim = kDefaultEmbedDim;
  std::uint64_t hash_seed = 0;
  std::vector<FieldEncoder> encoders;
  std::vector<std::size_t> lhs_encoder;  // per lhs field
  std::vector<std::size_t> rhs_encoder;  // per rhs field

  bool operator==(const Model&) const = default;
};

/// `dense_dims` gives the input length of every dense field.
[[nodiscard]] Model init_model(const FieldSchema& schema, const std::map<std::string, std::size_t>& dense_dims,
                               const ModelConfig& config, std::uint64_t seed);

/// Per-field model inputs, pre-tokenized and hashed once.
struct FieldInputs {
  std::vector<BucketList> buckets;  // text fields
  std::vector<DenseVector> dense;   // dense fields
};

/// Inputs for every field of one side, for a fixed record list.
struct SideInputs {
  std::vector<FieldInputs> fields;
  std::vector<std::string> ids;
};

enum class Side { lhs, rhs };

/// Extracts and hashes the side's fields from records. Throws DataError
/// when a record lacks a schema field or a dense field has the wrong length.
[[nodiscard]] SideInputs prepare_inputs(const Model& model, Side side, std::span<const Record* const> records);

/// Raw (unnormalized) embeddings of field `field` for the rows in `rows`.
[[nodiscard]] EmbeddingBatch encode_field(const Model& model, Side side, std::size_t field, const SideInputs& inputs,
                                          std::span<const std::size_t> rows);

/// Normalized per-field embeddings fused with `gamma`, for every row of `inputs`.
[[nodiscard]] EmbeddingBatch embed_side(const Model& model, Side side, const SideInputs& inputs,
                                        std::span<const double> gamma);

// Checkpoint container (little-endian):
//   8 bytes   magic "GCLCKPT\0"
//   u32       format version
//   u64       header length H
//   H bytes   JSON header: schema, dim, hash seed, field->encoder map and
//             per-encoder kind and shapes
//   ...       raw f64 payload, encoders in order; text: table, projection,
//             bias; dense: projection, bias
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Model& model);
/// Throws DataError on bad magic, version mismatch, or shape mismatch.
[[nodiscard]] Model load_checkpoint(const std::string& path);

}  // namespace gcl
