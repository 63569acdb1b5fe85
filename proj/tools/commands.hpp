// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace fscap::cli {

struct Options {
  std::string command;
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "run";
  std::filesystem::path checkpoint;
  std::filesystem::path examples;
  std::filesystem::path input;
  std::filesystem::path refs;
  std::filesystem::path data;
  std::optional<double> lambda;
  std::string ablate;
  std::string scan_lambda;
  std::string split = "test";
  std::string task = "caption";
};

/// Runs one subcommand. Throws on failure; the caller turns the exception
/// into the one-line error report.
void run(const Options& opt);

}  // namespace fscap::cli
