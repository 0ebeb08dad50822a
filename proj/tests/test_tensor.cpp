#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "vrl/checkpoint.hpp"
#include "vrl/rng.hpp"
#include "vrl/tensor.hpp"
#include "vrl/tensor_io.hpp"

using namespace vrl;
namespace fs = std::filesystem;

namespace {
std::string temp_dir() {
  const auto dir = fs::temp_directory_path() / "vrl_test_tensor";
  fs::create_directories(dir);
  return dir.string();
}
}  // namespace

TEST_CASE("tensor shape accounting") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.shape_str() == "2x3x4");
  CHECK_THROWS_AS(Tensor({2, -1}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.f, 2.f, 3.f}), std::invalid_argument);
  CHECK_THROWS_AS(reshape(t, {5, 5}), std::invalid_argument);
  const Tensor r = reshape(t, {6, 4});
  CHECK(r.dim(0) == 6);
  CHECK(r.numel() == 24);
}

TEST_CASE("grad buffer management") {
  Tensor t({3});
  CHECK(t.grad.empty());
  t.ensure_grad();
  CHECK(t.grad.size() == 3);
  t.grad[1] = 5.f;
  t.zero_grad();
  CHECK(t.grad[1] == 0.f);
}

TEST_CASE("rng determinism and splitting") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng c = Rng(42).split("worker", 0);
  Rng d = Rng(42).split("worker", 1);
  CHECK(c.next() != d.next());
  // split is independent of parent consumption
  Rng e(42);
  e.next();
  CHECK(Rng(42).split("x").next() == e.split("x").next());
  // serialize/restore round trip
  Rng f(7);
  f.next();
  const auto words = f.serialize();
  Rng g(0);
  g.restore(words);
  for (int i = 0; i < 10; ++i) CHECK(f.next() == g.next());
}

TEST_CASE("rng distributions sane") {
  Rng r(9);
  double sum = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / 10000 == doctest::Approx(0.5).epsilon(0.05));
  for (int i = 0; i < 100; ++i) {
    const uint64_t v = r.uniform_int(7);
    CHECK(v < 7);
  }
}

TEST_CASE("VRT1 round trip is lossless") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int64_t> shape;
    const int rank = 1 + static_cast<int>(rng.uniform_int(4));
    for (int i = 0; i < rank; ++i) shape.push_back(1 + static_cast<int64_t>(rng.uniform_int(6)));
    Tensor t(shape);
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    std::stringstream ss;
    write_vrt1(ss, t);
    const Tensor back = read_vrt1<float>(ss);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);  // bitwise
  }
  TensorD d({3, 3});
  for (auto& v : d.data) v = rng.normal();
  std::stringstream ss;
  write_vrt1(ss, d);
  const TensorD back = read_vrt1<double>(ss);
  CHECK(back.data == d.data);
}

TEST_CASE("VRT1 rejects corruption") {
  Tensor t({2, 2});
  std::stringstream ss;
  write_vrt1(ss, t);
  std::string bytes = ss.str();
  bytes[0] = 'X';
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(read_vrt1<float>(bad), std::runtime_error);
  // dtype mismatch
  std::stringstream ss2;
  write_vrt1(ss2, t);
  CHECK_THROWS_AS(read_vrt1<double>(ss2), std::runtime_error);
  std::stringstream ss3;
  write_vrt1(ss3, t);
  CHECK(peek_vrt1_dtype(ss3) == 0);
}

TEST_CASE("checkpoint archive round trip and rejection") {
  const std::string dir = temp_dir();
  const std::string path = dir + "/test.ckpt";
  Rng rng(5);
  Tensor a({4, 3});
  for (auto& v : a.data) v = static_cast<float>(rng.normal());
  TensorD b({2});
  b.data = {1.5, -2.5};
  CheckpointWriter w;
  w.add("net.a", a);
  w.add("misc.b", b);
  w.save(path);

  const Checkpoint c = Checkpoint::load(path);
  CHECK(c.f32("net.a").data == a.data);
  CHECK(c.f64("misc.b").data == b.data);
  CHECK(c.has("net.a"));
  CHECK_FALSE(c.has("net.missing"));

  Tensor dst({4, 3});
  ParamList<float> list{{"net.a", &dst}};
  c.restore(list);
  CHECK(dst.data == a.data);

  Tensor wrong({3, 4});
  ParamList<float> bad{{"net.a", &wrong}};
  CHECK_THROWS_AS(c.restore(bad), std::runtime_error);

  Tensor other({1});
  ParamList<float> missing{{"net.zzz", &other}};
  CHECK_THROWS_AS(c.restore(missing), std::runtime_error);

  CHECK_THROWS_AS(c.verify_no_extras("net.", ParamList<float>{}), std::runtime_error);

  // magic corruption is reported with the file name
  {
    std::ofstream f(path, std::ios::binary);
    f << "garbage";
  }
  try {
    Checkpoint::load(path);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(path) != std::string::npos);
  }
}

TEST_CASE("rng state embeds losslessly in checkpoints") {
  Rng r(123);
  r.next();
  r.next();
  const TensorD t = rng_state_tensor(r);
  Rng back = rng_from_state_tensor(t);
  for (int i = 0; i < 20; ++i) CHECK(r.next() == back.next());
}
