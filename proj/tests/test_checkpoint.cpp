#include <doctest.h>

#include <filesystem>

#include "coopnr/checkpoint.hpp"

using namespace coopnr;

namespace {

Checkpoint sample() {
  Checkpoint c;
  c.metadata = R"({"model":{"d_model":4}})";
  c.tensors.push_back({"embed/w", Tensor<float>({3, 4}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12})});
  c.tensors.push_back({"head/b2", Tensor<float>({2}, std::vector<float>{-0.5f, 0.25f})});
  c.tensors.push_back({"scalar", Tensor<float>::scalar(3.5f)});
  return c;
}

}  // namespace

TEST_CASE("checkpoint: encode/decode round trip is exact") {
  const auto c = sample();
  const auto bytes = encode_checkpoint(c);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.metadata == c.metadata);
  REQUIRE(back.tensors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tensors[i].name == c.tensors[i].name);
    CHECK(back.tensors[i].tensor == c.tensors[i].tensor);
  }
  CHECK(encode_checkpoint(back) == bytes);
  REQUIRE(back.find("head/b2") != nullptr);
  CHECK((*back.find("head/b2"))[1] == 0.25f);
  CHECK(back.find("missing") == nullptr);
}

TEST_CASE("checkpoint: header layout is little-endian with the magic first") {
  const auto bytes = encode_checkpoint(sample());
  const std::string magic(bytes.begin(), bytes.begin() + 7);
  CHECK(magic == "CNRCKPT");
  CHECK(bytes[7] == 0);
  CHECK(bytes[8] == kCheckpointVersion);
  CHECK(bytes[9] == 0);
}

TEST_CASE("checkpoint: malformed inputs are rejected") {
  auto bytes = encode_checkpoint(sample());
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[8] = 99;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(decode_checkpoint({}), FormatError);
}

TEST_CASE("checkpoint: file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "coopnr_test_ckpt.bin";
  const auto c = sample();
  save_checkpoint(path, c);
  const auto back = load_checkpoint(path);
  CHECK(encode_checkpoint(back) == encode_checkpoint(c));
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}
