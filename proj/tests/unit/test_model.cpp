#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gcl/error.hpp"
#include "gcl/model.hpp"

using namespace gcl;
namespace fs = std::filesystem;

namespace {

FieldSchema two_field_schema() {
  return {{{"text", FieldKind::text}}, {{"title", FieldKind::text}, {"image_vec", FieldKind::dense}}};
}

ModelConfig small_config() {
  ModelConfig c;
  c.buckets = 64;
  c.dim = 4;
  return c;
}

const std::map<std::string, std::size_t> kDims{{"image_vec", 3}};

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("gcl_test_" + name); }

}  // namespace

TEST(Model, InitIsSeeded) {
  const Model a = init_model(two_field_schema(), kDims, small_config(), 1);
  EXPECT_EQ(a, init_model(two_field_schema(), kDims, small_config(), 1));
  EXPECT_NE(a, init_model(two_field_schema(), kDims, small_config(), 2));
  EXPECT_EQ(a.encoders.size(), 3U);
  EXPECT_THROW((void)init_model(two_field_schema(), {}, small_config(), 1), ConfigError);
}

TEST(Model, TiedTextEncodersShareParameters) {
  ModelConfig c = small_config();
  c.tie_text_encoders = true;
  const Model m = init_model(two_field_schema(), kDims, c, 1);
  EXPECT_EQ(m.encoders.size(), 2U);
  EXPECT_EQ(m.lhs_encoder[0], m.rhs_encoder[0]);
  EXPECT_NE(m.rhs_encoder[0], m.rhs_encoder[1]);
}

TEST(Model, EmbedSideWithDegenerateGammaIsOneField) {
  const Model m = init_model(two_field_schema(), kDims, small_config(), 3);
  std::vector<Record> docs{{"d1", {{"title", "red shoe"}}, {{"image_vec", {1, 2, 3}}}},
                           {"d2", {{"title", "blue hat"}}, {{"image_vec", {-1, 0, 2}}}}};
  std::vector<const Record*> ptrs{&docs[0], &docs[1]};
  const SideInputs in = prepare_inputs(m, Side::rhs, ptrs);
  const std::vector<std::size_t> rows{0, 1};
  const auto title = normalize_rows(encode_field(m, Side::rhs, 0, in, rows));
  const auto fused = embed_side(m, Side::rhs, in, std::vector<double>{1.0, 0.0});
  EXPECT_EQ(fused.values, title.values);
}

TEST(Model, MissingFieldIsDataError) {
  const Model m = init_model(two_field_schema(), kDims, small_config(), 3);
  Record d{"d1", {{"title", "x"}}, {}};
  const Record* p = &d;
  EXPECT_THROW((void)prepare_inputs(m, Side::rhs, std::span<const Record* const>(&p, 1)), DataError);
}

TEST(Checkpoint, RoundTrip) {
  ModelConfig c = small_config();
  c.tie_text_encoders = true;
  const Model m = init_model(two_field_schema(), kDims, c, 4);
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(path.string(), m);
  EXPECT_EQ(load_checkpoint(path.string()), m);
  fs::remove(path);
}

TEST(Checkpoint, RejectsCorruption) {
  const Model m = init_model(two_field_schema(), kDims, small_config(), 5);
  const auto path = temp_file("corrupt.ckpt");
  save_checkpoint(path.string(), m);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary);
    out << b;
  };

  std::string bad_version = bytes;
  bad_version[8] = 2;
  write(bad_version);
  EXPECT_THROW((void)load_checkpoint(path.string()), DataError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  EXPECT_THROW((void)load_checkpoint(path.string()), DataError);

  write(bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW((void)load_checkpoint(path.string()), DataError);

  write(bytes + "x");
  EXPECT_THROW((void)load_checkpoint(path.string()), DataError);

  fs::remove(path);
  EXPECT_THROW((void)load_checkpoint(path.string()), ConfigError);
}
