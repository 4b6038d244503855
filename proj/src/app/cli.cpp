#include <algorithm>
#include <iostream>

#include "CLI11.hpp"
#include "mdnx/app/commands.hpp"
#include "mdnx/core/checkpoint.hpp"

namespace mdnx {

namespace {

const std::vector<std::string> kCommands = {"train", "eval", "infer", "ablate", "heatmap", "synth"};

int dispatch(const std::string& command, CommandContext& ctx) {
  if (command == "train") return cmd_train(ctx);
  if (command == "eval") return cmd_eval(ctx);
  if (command == "infer") return cmd_infer(ctx);
  if (command == "ablate") return cmd_ablate(ctx);
  if (command == "heatmap") return cmd_heatmap(ctx);
  return cmd_synth(ctx);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monocular 3D detection: training, evaluation, inference, ablations and attention heatmaps", "mdnx"};
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  std::vector<std::string> overrides;
  app.add_option("command", command, "train, eval, infer, ablate, heatmap or synth")
      ->required()
      ->check(CLI::IsMember(kCommands));
  app.add_option("--config", config_path, "key = value configuration file")->required();
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_flag("--strict", strict, "infer: fail when an image is skipped");
  app.add_option("--set", overrides, "extra key=value assignment applied after the file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "mdnx: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    CommandContext ctx;
    ctx.config_text = geo::read_text_file(config_path);
    ctx.cfg = parse_run_config(ctx.config_text);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
      apply_config_value(ctx.cfg, o.substr(0, eq), o.substr(eq + 1));
    }
    if (seed) ctx.cfg.seed = *seed;
    ctx.cfg.validate();
    ctx.strict = strict;
    ctx.threads = threads_from_env();
    ctx.out = &out;
    ctx.err = &err;
    return dispatch(command, ctx);
  } catch (const ConfigError& e) {
    err << "mdnx: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const geo::ParseError& e) {
    err << "mdnx: input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "mdnx: checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const NumericError& e) {
    err << "mdnx: numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "mdnx: error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mdnx
