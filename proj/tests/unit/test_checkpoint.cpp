// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fscap/checkpoint.hpp"
#include "toy_model.hpp"

using namespace fscap;

namespace {

std::filesystem::path fresh(const char* name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

Checkpoint sample() {
  std::vector<text::Words> corpus = {{"a", "dog"}, {"the", "cat", "runs"}};
  Checkpoint c{StyleCapModel<float>(toy::arch(8)), text::Vocab::build(corpus), 42, {}};
  c.model.set_frozen(group::kDiscriminator, true);
  c.extra.set("note", "trained");
  return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  auto dir = fresh("fscap_ckpt_rt");
  auto c = sample();
  save_checkpoint(dir, c);
  auto back = load_checkpoint(dir);
  CHECK(back.model.params() == c.model.params());
  CHECK(back.vocab == c.vocab);
  CHECK(back.step == 42);
  CHECK(back.extra.get("note") == "trained");
  CHECK(back.model.params().is_frozen(group::kDiscriminator));
  CHECK_FALSE(back.model.params().is_frozen(group::kStyle));
  CHECK(back.model.arch().model.d_model == 8);

  // Overwrite in place and reload.
  c.step = 43;
  save_checkpoint(dir, c);
  CHECK(load_checkpoint(dir).step == 43);
  CHECK_FALSE(std::filesystem::exists(dir.string() + ".staging"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint rejects damaged files") {
  auto dir = fresh("fscap_ckpt_bad");
  save_checkpoint(dir, sample());
  const auto blob = std::filesystem::directory_iterator(dir / "params")->path();
  std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 4);
  CHECK_THROWS_AS(load_checkpoint(dir), std::runtime_error);

  save_checkpoint(dir, sample());
  std::ofstream(dir / "vocab.txt", std::ios::app) << "extra\n";
  CHECK_THROWS_AS(load_checkpoint(dir), std::runtime_error);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), std::runtime_error);
  std::filesystem::remove_all(dir);
}
