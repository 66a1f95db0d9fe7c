#include "gcl/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "gcl/error.hpp"
#include "gcl/rng.hpp"

namespace gcl {

using nlohmann::json;

Model init_model(const FieldSchema& schema, const std::map<std::string, std::size_t>& dense_dims,
                 const ModelConfig& config, std::uint64_t seed) {
  schema.validate();
  if (config.dim == 0) throw ConfigError("model: dim must be positive");
  Model model;
  model.schema = schema;
  model.dim = config.dim;
  model.hash_seed = derive_seed(seed, "hash");

  auto make = [&](const FieldSpec& f, const std::string& side) -> FieldEncoder {
    const std::uint64_t s = derive_seed(seed, "encoder/" + side + "/" + f.name);
    if (f.kind == FieldKind::text) return init_text_params(s, config.buckets, config.dim, model.hash_seed);
    const auto it = dense_dims.find(f.name);
    if (it == dense_dims.end()) throw ConfigError("model: no declared dimension for dense field '" + f.name + "'");
    return init_dense_params(s, it->second, config.dim);
  };

  std::optional<std::size_t> first_lhs_text;
  for (const auto& f : schema.lhs) {
    if (f.kind == FieldKind::text && !first_lhs_text) first_lhs_text = model.encoders.size();
    model.lhs_encoder.push_back(model.encoders.size());
    model.encoders.push_back(make(f, "lhs"));
  }
  bool tied = false;
  for (const auto& f : schema.rhs) {
    if (config.tie_text_encoders && !tied && f.kind == FieldKind::text && first_lhs_text) {
      model.rhs_encoder.push_back(*first_lhs_text);
      tied = true;
      continue;
    }
    model.rhs_encoder.push_back(model.encoders.size());
    model.encoders.push_back(make(f, "rhs"));
  }
  return model;
}

namespace {

const std::vector<FieldSpec>& fields_of(const Model& model, Side side) {
  return side == Side::lhs ? model.schema.lhs : model.schema.rhs;
}

std::size_t encoder_of(const Model& model, Side side, std::size_t field) {
  return side == Side::lhs ? model.lhs_encoder.at(field) : model.rhs_encoder.at(field);
}

}  // namespace

SideInputs prepare_inputs(const Model& model, Side side, std::span<const Record* const> records) {
  const auto& fields = fields_of(model, side);
  SideInputs out;
  out.fields.resize(fields.size());
  out.ids.reserve(records.size());
  for (const Record* rec : records) out.ids.push_back(rec->id);
  for (std::size_t f = 0; f < fields.size(); ++f) {
    const auto& encoder = model.encoders[encoder_of(model, side, f)];
    const auto& spec = fields[f];
    for (const Record* rec : records) {
      if (spec.kind == FieldKind::text) {
        const auto it = rec->text.find(spec.name);
        if (it == rec->text.end()) throw DataError("record '" + rec->id + "' has no text field '" + spec.name + "'");
        out.fields[f].buckets.push_back(hash_tokens(std::get<TextEncoderParams>(encoder), tokenize(it->second)));
      } else {
        const auto it = rec->dense.find(spec.name);
        if (it == rec->dense.end()) throw DataError("record '" + rec->id + "' has no dense field '" + spec.name + "'");
        const auto& params = std::get<DenseEncoderParams>(encoder);
        if (it->second.size() != params.input_dim()) {
          throw DataError("record '" + rec->id + "': field '" + spec.name + "' has " +
                          std::to_string(it->second.size()) + " values, model expects " +
                          std::to_string(params.input_dim()));
        }
        out.fields[f].dense.push_back(it->second);
      }
    }
  }
  return out;
}

EmbeddingBatch encode_field(const Model& model, Side side, std::size_t field, const SideInputs& inputs,
                            std::span<const std::size_t> rows) {
  const auto& encoder = model.encoders[encoder_of(model, side, field)];
  const auto& in = inputs.fields.at(field);
  if (const auto* text = std::get_if<TextEncoderParams>(&encoder)) {
    std::vector<BucketList> batch;
    batch.reserve(rows.size());
    for (std::size_t r : rows) batch.push_back(in.buckets.at(r));
    return encode_buckets(*text, batch);
  }
  std::vector<DenseVector> batch;
  std::vector<std::string> ids;
  batch.reserve(rows.size());
  for (std::size_t r : rows) {
    batch.push_back(in.dense.at(r));
    ids.push_back(inputs.ids.at(r));
  }
  return encode_dense(std::get<DenseEncoderParams>(encoder), batch, ids);
}

EmbeddingBatch embed_side(const Model& model, Side side, const SideInputs& inputs, std::span<const double> gamma) {
  const std::size_t n_fields = fields_of(model, side).size();
  std::vector<std::size_t> rows(inputs.ids.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::vector<EmbeddingBatch> per_field;
  per_field.reserve(n_fields);
  for (std::size_t f = 0; f < n_fields; ++f) per_field.push_back(normalize_rows(encode_field(model, side, f, inputs, rows)));
  return fuse(per_field, gamma);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'G', 'C', 'L', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  auto bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename T>
T get_le(std::istream& in, const std::string& path) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw DataError(path + ": truncated checkpoint");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

void put_values(std::ostream& out, std::span<const double> values) {
  for (double v : values) put_le(out, v);
}

void get_values(std::istream& in, std::span<double> values, const std::string& path) {
  for (double& v : values) v = get_le<double>(in, path);
}

json schema_json(const std::vector<FieldSpec>& side) {
  json arr = json::array();
  for (const auto& f : side) arr.push_back({{"name", f.name}, {"kind", f.kind == FieldKind::text ? "text" : "dense"}});
  return arr;
}

std::vector<FieldSpec> schema_from_json(const json& arr) {
  std::vector<FieldSpec> out;
  for (const auto& f : arr) {
    const auto kind = f.at("kind").get<std::string>();
    if (kind != "text" && kind != "dense") throw DataError("checkpoint: unknown field kind '" + kind + "'");
    out.push_back({f.at("name").get<std::string>(), kind == "text" ? FieldKind::text : FieldKind::dense});
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  json header;
  header["dim"] = model.dim;
  header["hash_seed"] = model.hash_seed;
  header["schema"] = {{"lhs", schema_json(model.schema.lhs)}, {"rhs", schema_json(model.schema.rhs)}};
  header["lhs_encoder"] = model.lhs_encoder;
  header["rhs_encoder"] = model.rhs_encoder;
  header["encoders"] = json::array();
  for (const auto& enc : model.encoders) {
    if (const auto* t = std::get_if<TextEncoderParams>(&enc)) {
      header["encoders"].push_back({{"kind", "text"}, {"buckets", t->buckets()}, {"dim", t->dim()},
                                    {"hash_seed", t->hash_seed}});
    } else {
      const auto& d = std::get<DenseEncoderParams>(enc);
      header["encoders"].push_back({{"kind", "dense"}, {"input_dim", d.input_dim()}, {"dim", d.dim()}});
    }
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  put_le(out, kCheckpointVersion);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& enc : model.encoders) {
    if (const auto* t = std::get_if<TextEncoderParams>(&enc)) {
      put_values(out, t->table.data());
      put_values(out, t->projection.data());
      put_values(out, t->bias);
    } else {
      const auto& d = std::get<DenseEncoderParams>(enc);
      put_values(out, d.projection.data());
      put_values(out, d.bias);
    }
  }
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path + ": not a checkpoint file");
  }
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw DataError(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const auto header_len = get_le<std::uint64_t>(in, path);
  if (header_len > (1U << 26)) throw DataError(path + ": implausible header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw DataError(path + ": truncated header");

  Model model;
  try {
    const json header = json::parse(text);
    model.dim = header.at("dim").get<std::size_t>();
    model.hash_seed = header.at("hash_seed").get<std::uint64_t>();
    model.schema.lhs = schema_from_json(header.at("schema").at("lhs"));
    model.schema.rhs = schema_from_json(header.at("schema").at("rhs"));
    model.lhs_encoder = header.at("lhs_encoder").get<std::vector<std::size_t>>();
    model.rhs_encoder = header.at("rhs_encoder").get<std::vector<std::size_t>>();
    for (const auto& e : header.at("encoders")) {
      const auto dim = e.at("dim").get<std::size_t>();
      if (dim != model.dim) throw DataError(path + ": encoder dim " + std::to_string(dim) + " differs from model dim");
      if (e.at("kind").get<std::string>() == "text") {
        TextEncoderParams p{e.at("hash_seed").get<std::uint64_t>(), Matrix(e.at("buckets").get<std::size_t>(), dim),
                            Matrix(dim, dim), std::vector<double>(dim)};
        if (p.table.rows() < 2) throw DataError(path + ": text encoder needs at least 2 buckets");
        model.encoders.emplace_back(std::move(p));
      } else {
        model.encoders.emplace_back(
            DenseEncoderParams{Matrix(e.at("input_dim").get<std::size_t>(), dim), std::vector<double>(dim)});
      }
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed checkpoint header: " + e.what());
  }
  try {
    model.schema.validate();
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  }
  auto check_map = [&](const std::vector<std::size_t>& map, const std::vector<FieldSpec>& fields) {
    if (map.size() != fields.size()) throw DataError(path + ": field/encoder map does not match schema");
    for (std::size_t i = 0; i < map.size(); ++i) {
      if (map[i] >= model.encoders.size()) throw DataError(path + ": encoder index out of range");
      const bool is_text = std::holds_alternative<TextEncoderParams>(model.encoders[map[i]]);
      if (is_text != (fields[i].kind == FieldKind::text)) throw DataError(path + ": encoder kind does not match field");
    }
  };
  check_map(model.lhs_encoder, model.schema.lhs);
  check_map(model.rhs_encoder, model.schema.rhs);

  for (auto& enc : model.encoders) {
    if (auto* t = std::get_if<TextEncoderParams>(&enc)) {
      get_values(in, t->table.data(), path);
      get_values(in, t->projection.data(), path);
      get_values(in, t->bias, path);
    } else {
      auto& d = std::get<DenseEncoderParams>(enc);
      get_values(in, d.projection.data(), path);
      get_values(in, d.bias, path);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes after payload");
  return model;
}

}  // namespace gcl
