#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "uwdiff/checkpoint.hpp"
#include "uwdiff/error.hpp"
#include "uwdiff/png_io.hpp"
#include "uwdiff/rng.hpp"

using namespace uwdiff;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("uwdiff_ck_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this) & 0xffff));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.meta = {{"step", 1234}, {"epoch", 7}, {"cfg", {{"lr", 2e-4}, {"name", "toy"}}}};
  SeededRng rng(404);
  auto add = [&](const std::string& name, std::vector<int> shape) {
    Tensor<float> t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal());
    ck.tensors.emplace_back(name, std::move(t));
  };
  add("enc.w", {8, 3, 3, 3});
  add("enc.b", {8});
  add("head.w", {4, 8});
  return ck;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir;
  Checkpoint ck = sample_checkpoint();

  // Include every awkward float bit pattern; the payload is raw bytes.
  Tensor<float> odd({6});
  const uint32_t bits[6] = {0x7f800000u, 0xff800000u, 0x7fc00000u,
                            0x00000001u, 0x80000000u, 0x3f800000u};
  std::memcpy(odd.data(), bits, sizeof(bits));
  ck.tensors.emplace_back("odd", std::move(odd));

  const std::string path = dir.file("state.ckpt");
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);

  CHECK(back.meta == ck.meta);
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    const Tensor<float>& a = ck.tensors[i].second;
    const Tensor<float>& b = back.tensors[i].second;
    REQUIRE(a.shape() == b.shape());
    CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
  }
  // The staging file must not survive a successful save.
  CHECK_FALSE(fs::exists(path + ".tmp"));
}

TEST_CASE("find locates tensors by name") {
  Checkpoint ck = sample_checkpoint();
  const Tensor<float>* t = ck.find("enc.b");
  REQUIRE(t != nullptr);
  CHECK(t->shape() == std::vector<int>{8});
  CHECK(ck.find("enc") == nullptr);
  CHECK(ck.find("") == nullptr);
}

TEST_CASE("saving over an existing checkpoint replaces it") {
  TempDir dir;
  const std::string path = dir.file("state.ckpt");
  Checkpoint a = sample_checkpoint();
  save_checkpoint(path, a);
  Checkpoint b = sample_checkpoint();
  b.meta["step"] = 9999;
  b.tensors.clear();
  Tensor<float> one({2});
  one[0] = 1.0f;
  one[1] = 2.0f;
  b.tensors.emplace_back("solo", std::move(one));
  save_checkpoint(path, b);

  Checkpoint back = load_checkpoint(path);
  CHECK(back.meta.at("step") == 9999);
  REQUIRE(back.tensors.size() == 1);
  CHECK(back.tensors[0].first == "solo");
}

TEST_CASE("empty checkpoint round trips") {
  TempDir dir;
  Checkpoint ck;
  ck.meta = nlohmann::json::object();
  const std::string path = dir.file("empty.ckpt");
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.meta.is_object());
  CHECK(back.meta.empty());
  CHECK(back.tensors.empty());
}

TEST_CASE("corrupted files are rejected") {
  TempDir dir;
  Checkpoint ck;
  ck.meta = nlohmann::json::object();  // dumps to "{}", fixed layout
  Tensor<float> t({3});
  t.fill(0.5f);
  ck.tensors.emplace_back("w", std::move(t));
  const std::string path = dir.file("good.ckpt");
  save_checkpoint(path, ck);
  const std::vector<uint8_t> good = read_file(path);

  auto write_variant = [&](std::vector<uint8_t> bytes) {
    const std::string p = dir.file("bad.ckpt");
    write_file(p, bytes);
    return p;
  };

  SUBCASE("bad magic") {
    std::vector<uint8_t> b = good;
    b[0] ^= 0xff;
    CHECK_THROWS_AS(load_checkpoint(write_variant(b)), DecodeError);
  }
  SUBCASE("unsupported version") {
    std::vector<uint8_t> b = good;
    b[4] = 0x7f;
    CHECK_THROWS_AS(load_checkpoint(write_variant(b)), DecodeError);
  }
  SUBCASE("truncation anywhere fails cleanly") {
    for (size_t keep : {size_t{0}, size_t{3}, size_t{9}, size_t{17},
                        good.size() / 2, good.size() - 1}) {
      std::vector<uint8_t> b(good.begin(), good.begin() + keep);
      CHECK_THROWS_AS(load_checkpoint(write_variant(b)), DecodeError);
    }
  }
  SUBCASE("trailing bytes rejected") {
    std::vector<uint8_t> b = good;
    b.push_back(0x00);
    CHECK_THROWS_AS(load_checkpoint(write_variant(b)), DecodeError);
  }
  SUBCASE("garbage meta json rejected") {
    std::vector<uint8_t> b = good;
    // Meta starts after magic(4) + version(4) + length(8); "{}" -> "{X".
    b[17] = 'X';
    CHECK_THROWS_AS(load_checkpoint(write_variant(b)), DecodeError);
  }
  SUBCASE("implausible tensor rank rejected") {
    std::vector<uint8_t> b = good;
    // Layout: 16 header + 2 meta + 8 count + 4 name_len + 1 name, then rank.
    const size_t rank_off = 16 + 2 + 8 + 4 + 1;
    b[rank_off] = 0xff;
    CHECK_THROWS_AS(load_checkpoint(write_variant(b)), DecodeError);
  }
}

TEST_CASE("io failures surface as IoError") {
  TempDir dir;
  CHECK_THROWS_AS(load_checkpoint(dir.file("missing.ckpt")), IoError);
  Checkpoint ck;
  ck.meta = nlohmann::json::object();
  CHECK_THROWS_AS(save_checkpoint(dir.file("no_such_dir/x.ckpt"), ck), IoError);
}
