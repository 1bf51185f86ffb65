#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "padst/checkpoint.hpp"
#include "padst/errors.hpp"

using namespace padst;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "padst_ckpt_tests";
  fs::create_directories(dir);
  return dir / name;
}

Checkpoint sample() {
  Checkpoint c;
  c.model_config = {{"d_model", 4}};
  c.metadata = {{"variant", "plain"}, {"vocab", {"<pad>", "a"}}};
  c.tensors.push_back({"w", Tensor<float>({2, 3}, {1.5f, -0.0f, 3e-38f, 7, 8, 9})});
  c.tensors.push_back(
      {"b", Tensor<float>({1}, {std::numeric_limits<float>::denorm_min()})});
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  auto path = temp_file("rt.ckpt");
  auto c = sample();
  write_checkpoint(path, c);
  auto r = read_checkpoint(path);
  EXPECT_EQ(r.model_config, c.model_config);
  EXPECT_EQ(r.metadata, c.metadata);
  ASSERT_EQ(r.tensors.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r.tensors[i].name, c.tensors[i].name);
    EXPECT_EQ(r.tensors[i].value.shape(), c.tensors[i].value.shape());
    for (std::size_t j = 0; j < c.tensors[i].value.size(); ++j) {
      EXPECT_EQ(std::bit_cast<std::uint32_t>(r.tensors[i].value[j]),
                std::bit_cast<std::uint32_t>(c.tensors[i].value[j]));
    }
  }
  EXPECT_EQ(slurp(path).rfind("PADST1\n", 0), 0u);
}

TEST(Checkpoint, BadMagicNamesBothValues) {
  auto path = temp_file("magic.ckpt");
  dump(path, "NOTCKP\n{}\n");
  try {
    read_checkpoint(path);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("PADST1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("NOTCKP"), std::string::npos);
  }
}

TEST(Checkpoint, TruncatedPayloadIsRejected) {
  auto path = temp_file("trunc.ckpt");
  write_checkpoint(path, sample());
  auto bytes = slurp(path);
  dump(path, bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(read_checkpoint(path), DataError);
  dump(path, bytes.substr(0, 20));
  EXPECT_THROW(read_checkpoint(path), DataError);
}

TEST(Checkpoint, VersionMismatchIsRejected) {
  auto path = temp_file("ver.ckpt");
  dump(path, "PADST1\n{\"format_version\":2,\"model_config\":{},\"tensors\":[]}\n");
  EXPECT_THROW(read_checkpoint(path), DataError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(read_checkpoint(temp_file("does_not_exist.ckpt")), IoError);
}

TEST(Checkpoint, DuplicateTensorNamesRejectedOnWrite) {
  auto c = sample();
  c.tensors.push_back(c.tensors.front());
  EXPECT_THROW(write_checkpoint(temp_file("dup.ckpt"), c), DataError);
}
