/*
 * Copyright 2026 The Noisy Label Lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlab/errors.hpp"
#include "nlab/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON experiment config (defaults when omitted)");
    cmd->add_option("--seed", seed, "Overrides the config seed");
    cmd->add_option("--out", out, "Run directory (overrides the config)");
    cmd->add_option("--override", overrides, "key.path=value, repeatable")->take_all();
  }

  nlab::ExperimentConfig load() const {
    nlab::ExperimentConfig c = nlab::load_config(config, overrides);
    if (seed) c.seed = *seed;
    if (!out.empty()) c.out = out;
    return c;
  }
};

nlab::Variant variant_or_throw(const std::string& name) {
  auto v = nlab::parse_variant(name);
  if (!v) {
    throw nlab::UsageError("unknown variant \"" + name +
                           "\" (expected baseline, ft_clean, ft_mixed, "
                           "ours_pretrained or ours_joint)");
  }
  return *v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-cleaning experiments on synthetic noisy multi-label data"};
  app.require_subcommand(1);

  CommonFlags generate_flags, train_flags, evaluate_flags, reproduce_flags;
  std::string train_variant;
  std::vector<std::string> evaluate_variants;

  auto* generate = app.add_subcommand("generate", "Generate and save a dataset");
  generate_flags.attach(generate);
  auto* train = app.add_subcommand("train", "Train one variant");
  train_flags.attach(train);
  train->add_option("--variant", train_variant, "Variant to train")->required();
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate trained checkpoints on E");
  evaluate_flags.attach(evaluate);
  evaluate->add_option("--variant", evaluate_variants,
                       "Variants to evaluate (all with checkpoints when omitted)");
  auto* reproduce = app.add_subcommand("reproduce", "Generate, train every variant, evaluate");
  reproduce_flags.attach(reproduce);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (generate->parsed()) {
      nlab::cmd_generate(generate_flags.load(), std::cout);
    } else if (train->parsed()) {
      const nlab::Variant v = variant_or_throw(train_variant);
      nlab::cmd_train(train_flags.load(), v, std::cout);
    } else if (evaluate->parsed()) {
      std::vector<nlab::Variant> variants;
      for (const auto& name : evaluate_variants) variants.push_back(variant_or_throw(name));
      nlab::cmd_evaluate(evaluate_flags.load(), variants, std::cout);
    } else if (reproduce->parsed()) {
      const auto manifest = nlab::cmd_reproduce(reproduce_flags.load(), std::cout);
      std::cout << "summary: " << manifest.summary << "\n";
    }
  } catch (const nlab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlab::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlab::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
