// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fscap/binary_io.hpp"
#include "fscap/visual.hpp"
#include "toy_model.hpp"

using namespace fscap;

namespace {

text::Vocab vocab() {
  std::vector<text::Words> corpus = {{"a", "dog", "runs", "happy"}, {"a", "cat", "sits"}};
  return text::Vocab::build(corpus);
}

}  // namespace

TEST_CASE("visual basis marks content words") {
  auto v = vocab();
  std::vector<std::string> content = {"dog", "cat", "runs", "sits"};
  auto b = VisualBasis::make(5, v, content, 3);
  CHECK(b.weight.rows() == 5);
  CHECK(b.weight.cols() == v.size());
  for (std::size_t id = 0; id < v.size(); ++id) {
    const auto& tok = v.token(static_cast<int>(id));
    const bool is_content = std::find(content.begin(), content.end(), tok) != content.end();
    CHECK(bool(b.content[id]) == is_content);
  }
  CHECK(VisualBasis::make(5, v, content, 3).weight == b.weight);
  CHECK_FALSE(VisualBasis::make(5, v, content, 4).weight == b.weight);
}

TEST_CASE("noise-free feature is the basis times the content bag") {
  auto v = vocab();
  std::vector<std::string> content = {"dog", "cat", "runs", "sits"};
  auto b = VisualBasis::make(3, v, content, 1);
  auto cap = v.encode({"a", "happy", "dog", "runs", "dog"});
  std::mt19937_64 rng(0);
  auto f = synth_visual(cap, b, 0.0, 2, rng);
  REQUIRE(f.rows() == 2);
  REQUIRE(f.cols() == 3);
  const int dog = v.id("dog"), runs = v.id("runs");
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(f(r, c) == doctest::Approx(2.0f * b.weight(c, dog) + b.weight(c, runs)).epsilon(1e-6));

  std::mt19937_64 r1(9), r2(9);
  auto n1 = synth_visual(cap, b, 0.5, 2, r1);
  auto n2 = synth_visual(cap, b, 0.5, 2, r2);
  CHECK(n1 == n2);
  double sq = 0.0;
  for (std::size_t i = 0; i < n1.size(); ++i) sq += std::pow(n1.flat()[i] - f.flat()[i], 2);
  CHECK(sq > 0.0);
}

TEST_CASE("projection output shape and validation") {
  StyleCapModel<double> m(toy::arch());
  Tape<double> t(&m.params(), nullptr, false);
  auto out = project(m, t, t.constant(Matrix<double>(2, 4, 0.5)));
  CHECK(t.value(out).rows() == 2);
  CHECK(t.value(out).cols() == 8);
  auto one = project(m, t, t.constant(Matrix<double>(1, 4, 0.5)));
  CHECK(t.value(one).rows() == 2);
  CHECK_THROWS(project(m, t, t.constant(Matrix<double>(3, 4))));
  CHECK_THROWS(project(m, t, t.constant(Matrix<double>(2, 5))));
  CHECK_THROWS(project(m, t, t.constant(Matrix<double>(0, 4))));
}

TEST_CASE("vision split round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "fscap_vision_rt";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::vector<VisionItem> items;
  for (int i = 0; i < 4; ++i) {
    VisualFeature f(2, 3);
    for (std::size_t k = 0; k < f.size(); ++k) f.flat()[k] = 0.25f * float(i) - 1.0f / float(k + 3);
    items.push_back({"img" + std::to_string(i), {"a", "dog", std::to_string(i)}, f});
  }
  write_vision_split(dir, "val", items);
  auto back = read_vision_split(dir, "val");
  REQUIRE(back.size() == items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(back[i].id == items[i].id);
    CHECK(back[i].caption == items[i].caption);
    CHECK(back[i].feature == items[i].feature);
  }
  CHECK_THROWS(read_vision_split(dir, "test"));

  std::filesystem::resize_file(dir / "val.features.bin", 20);
  CHECK_THROWS(read_vision_split(dir, "val"));
  std::filesystem::remove_all(dir);
}
