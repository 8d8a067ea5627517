#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "testutil.hpp"
#include "vidstereo/io.hpp"

using namespace vidstereo;
using testutil::random_tensor;

namespace {

std::string tmpdir() {
  static std::string dir = [] {
    auto d = std::filesystem::temp_directory_path() / "vidstereo_io_test";
    std::filesystem::create_directories(d);
    return d.string();
  }();
  return dir;
}

Tensor f32_representable(Shape s, std::uint64_t seed) {
  Tensor t = random_tensor(s, seed, -50.0, 50.0);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(static_cast<float>(t[i]));
  return t;
}

}  // namespace

TEST_CASE("pfm: roundtrip is bit-identical for f32-representable fields") {
  Tensor d = f32_representable({6, 9}, 201);
  std::string p = tmpdir() + "/a.pfm";
  write_pfm(p, d);
  Tensor back = read_pfm(p);
  REQUIRE(back.shape() == d.shape());
  for (std::int64_t i = 0; i < d.numel(); ++i) CHECK(back[i] == d[i]);
  // file-level roundtrip too
  std::string p2 = tmpdir() + "/a2.pfm";
  write_pfm(p2, back);
  CHECK(fnv1a_hex(p) == fnv1a_hex(p2));
}

TEST_CASE("pfm: little-endian negative scale accepted") {
  std::string p = tmpdir() + "/scale.pfm";
  std::ofstream out(p, std::ios::binary);
  out << "Pf\n2 1\n-1.0\n";
  float vals[2] = {1.5f, -2.5f};
  out.write(reinterpret_cast<char*>(vals), 8);
  out.close();
  Tensor d = read_pfm(p);
  CHECK(d.at(0, 0) == 1.5);
  CHECK(d.at(0, 1) == -2.5);
}

TEST_CASE("pfm: bad magic and truncation produce parse errors with offsets") {
  std::string p = tmpdir() + "/bad.pfm";
  std::ofstream(p) << "PF\n2 2\n-1.0\nxxxx";
  CHECK_THROWS_WITH_AS(read_pfm(p), doctest::Contains("bad PFM magic"), IoError);
  std::ofstream(p, std::ios::trunc) << "Pf\n4 4\n-1.0\nab";
  CHECK_THROWS_WITH_AS(read_pfm(p), doctest::Contains("truncated"), IoError);
  std::ofstream(p, std::ios::trunc) << "Pf\n";
  CHECK_THROWS_AS(read_pfm(p), IoError);
}

TEST_CASE("flo: roundtrip bit-identical, bad magic and length mismatch rejected") {
  Tensor f = f32_representable({2, 4, 6}, 202);
  std::string p = tmpdir() + "/a.flo";
  write_flo(p, f);
  Tensor back = read_flo(p);
  for (std::int64_t i = 0; i < f.numel(); ++i) CHECK(back[i] == f[i]);

  std::string bad = tmpdir() + "/bad.flo";
  std::ofstream(bad, std::ios::binary) << "nope" << std::string(8, '\0');
  CHECK_THROWS_WITH_AS(read_flo(bad), doctest::Contains("bad flo magic"), IoError);

  // valid header, payload one pair short
  std::ofstream out(bad, std::ios::binary | std::ios::trunc);
  float magic = 202021.25f;
  std::int32_t w = 2, h = 2;
  out.write(reinterpret_cast<char*>(&magic), 4);
  out.write(reinterpret_cast<char*>(&w), 4);
  out.write(reinterpret_cast<char*>(&h), 4);
  std::vector<float> payload(6, 0.0f);
  out.write(reinterpret_cast<char*>(payload.data()), 24);
  out.close();
  CHECK_THROWS_WITH_AS(read_flo(bad), doctest::Contains("length mismatch"), IoError);
}

TEST_CASE("png16 disparity: scale definition and invalid code") {
  Tensor d({1, 3});
  d.at(0, 0) = 1.0;   // code 256
  d.at(0, 1) = 0.0;   // code 0 -> invalid
  d.at(0, 2) = 77.25;
  std::string p = tmpdir() + "/d.png";
  write_disp_png16(p, d);
  auto [back, valid] = read_disp_png16(p);
  CHECK(back.at(0, 0) == doctest::Approx(1.0));
  CHECK(valid.at(0, 0) == 1.0);
  CHECK(valid.at(0, 1) == 0.0);
  CHECK(back.at(0, 2) == doctest::Approx(77.25));
}

TEST_CASE("png16 disparity: exhaustive code sweep is exact, random fields within 1/512") {
  // every representable code survives a write-read unchanged
  int n = 65535;
  Tensor d({1, n});
  for (int i = 0; i < n; ++i) d.at(0, i) = (i + 1) / 256.0;
  std::string p = tmpdir() + "/sweep.png";
  write_disp_png16(p, d);
  auto [back, valid] = read_disp_png16(p);
  for (int i = 0; i < n; ++i) {
    CHECK(back.at(0, i) == d.at(0, i));
    CHECK(valid.at(0, i) == 1.0);
  }
  // random fields quantize within half a code
  Tensor r = random_tensor({16, 16}, 203, 0.01, 250.0);
  write_disp_png16(p, r);
  auto [rb, rv] = read_disp_png16(p);
  for (std::int64_t i = 0; i < r.numel(); ++i) {
    CHECK(rv[i] == 1.0);
    CHECK(std::fabs(rb[i] - r[i]) <= 1.0 / 512.0 + 1e-12);
  }
}

TEST_CASE("png rgb8 and mask roundtrips") {
  Tensor img = random_tensor({3, 5, 7}, 204, 0.0, 1.0);
  std::string p = tmpdir() + "/img.png";
  write_png_rgb8(p, img);
  Tensor back = read_png_rgb8(p);
  for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(std::fabs(back[i] - img[i]) <= 0.5 / 255.0 + 1e-12);

  Tensor mask({4, 4});
  for (int i = 0; i < 16; ++i) mask[i] = i % 3 == 0 ? 1.0 : 0.0;
  write_png_mask(tmpdir() + "/m.png", mask);
  Tensor mb = read_png_mask(tmpdir() + "/m.png");
  for (int i = 0; i < 16; ++i) CHECK(mb[i] == mask[i]);
}

TEST_CASE("array container: bit-identical roundtrip with ranks 1..5 and ints") {
  ArrayContainer c;
  c.arrays["alpha"] = random_tensor({7}, 205);
  c.arrays["beta"] = random_tensor({3, 4}, 206);
  c.arrays["gamma/conv.w"] = random_tensor({2, 3, 3, 5, 5}, 207);
  c.ints["step"] = 123456789012345ll;
  std::string p = tmpdir() + "/c.bin";
  c.save(p);
  ArrayContainer back = ArrayContainer::load(p);
  CHECK(back.ints.at("step") == 123456789012345ll);
  REQUIRE(back.arrays.size() == 3);
  for (const auto& [name, t] : c.arrays) {
    const Tensor& bt = back.arrays.at(name);
    REQUIRE(bt.shape() == t.shape());
    for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(bt[i] == t[i]);
  }
  // second save is byte-identical
  std::string p2 = tmpdir() + "/c2.bin";
  back.save(p2);
  CHECK(fnv1a_hex(p) == fnv1a_hex(p2));
}

TEST_CASE("array container: corrupt inputs rejected") {
  std::string p = tmpdir() + "/corrupt.bin";
  std::ofstream(p, std::ios::binary) << "NOPE";
  CHECK_THROWS_WITH_AS(ArrayContainer::load(p), doctest::Contains("magic"), IoError);
  ArrayContainer c;
  c.arrays["x"] = random_tensor({4, 4}, 208);
  c.save(p);
  // truncate
  std::string full;
  {
    std::ifstream in(p, std::ios::binary);
    full.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  std::ofstream(p, std::ios::binary | std::ios::trunc) << full.substr(0, full.size() - 9);
  CHECK_THROWS_WITH_AS(ArrayContainer::load(p), doctest::Contains("truncated"), IoError);
}
