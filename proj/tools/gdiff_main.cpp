// Command-line front end: gen-toy, ingest, train, sample, eval. Every
// subcommand reads one key=value config file plus --set overrides; see
// README.md for the key list and file formats.

#include <gdiff/checkpoint.hpp>
#include <gdiff/config.hpp>
#include <gdiff/dataset.hpp>
#include <gdiff/evaluate.hpp>
#include <gdiff/sampling.hpp>
#include <gdiff/training.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

gdiff::RunConfig resolve_config(const CommonArgs& args) {
  gdiff::RunConfig cfg;
  if (!args.config_path.empty())
    cfg = gdiff::parse_config(gdiff::read_text_file(args.config_path));
  for (const std::string& kv : args.overrides) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    gdiff::config_set(cfg, gdiff::detail::trim(kv.substr(0, eq)),
                      gdiff::detail::trim(kv.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "key=value configuration file");
  sub->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
}

void require(const std::string& value, const char* key, const char* cmd) {
  if (value.empty())
    throw std::invalid_argument(std::string(cmd) + ": config key '" + key + "' is required");
}

int cmd_gen_toy(const gdiff::RunConfig& cfg) {
  require(cfg.dataset, "dataset", "gen-toy");
  gdiff::ProviderTables tables = gdiff::load_provider_tables(cfg.resolved_data_dir());
  auto plans = gdiff::gen_toy(cfg.dataset, cfg.toy_dialogs, cfg.toy_seconds, cfg.rng_seed, tables);
  std::cout << "gen-toy: wrote " << plans.size() << " dialogs to " << cfg.dataset << "\n";
  return 0;
}

int cmd_ingest(const gdiff::RunConfig& cfg) {
  gdiff::IngestSummary s = gdiff::ingest(cfg);
  std::cout << "ingest: " << s.index.dialogs.size() << " dialogs, " << s.total_windows
            << " windows, motion_dim " << s.motion_dim << " -> " << cfg.cache_dir << "\n";
  return 0;
}

int cmd_train(const gdiff::RunConfig& cfg) {
  gdiff::TrainResult r = gdiff::train(cfg);
  std::cout << "train: " << r.steps_run << " steps, final loss " << r.final_loss << " -> "
            << cfg.checkpoint << "\n";
  return 0;
}

int cmd_sample(const gdiff::RunConfig& cfg) {
  require(cfg.checkpoint, "checkpoint", "sample");
  require(cfg.dataset, "dataset", "sample");
  require(cfg.dialog, "dialog", "sample");
  require(cfg.out, "out", "sample");
  gdiff::Checkpoint ckpt = gdiff::load_checkpoint(cfg.checkpoint);
  ckpt.config.guidance = cfg.guidance;  // sampling-time knob
  gdiff::ProviderTables tables = gdiff::load_provider_tables(cfg.resolved_data_dir());
  gdiff::Rng rng(cfg.rng_seed);
  gdiff::SampleResult res =
      gdiff::sample_dialog(ckpt, cfg.dataset, cfg.dialog, cfg.duration_s, rng, tables);
  gdiff::write_text_file(cfg.out, gdiff::serialize_bvh(ckpt.skeleton, res.clip));
  std::cout << "sample: " << res.clip.frames.rows() << " frames (" << res.n_windows
            << " windows) -> " << cfg.out << "\n";
  return 0;
}

int cmd_eval(const gdiff::RunConfig& cfg) {
  require(cfg.checkpoint, "checkpoint", "eval");
  require(cfg.dataset, "dataset", "eval");
  gdiff::Checkpoint ckpt = gdiff::load_checkpoint(cfg.checkpoint);
  ckpt.config.guidance = cfg.guidance;
  gdiff::EvalReport report = gdiff::evaluate_split(cfg, ckpt, cfg.split);
  std::string csv = gdiff::eval_report_csv(report);
  if (cfg.out.empty()) {
    std::cout << csv;
  } else {
    gdiff::write_text_file(cfg.out, csv);
    std::cout << "eval: " << report.rows.size() << " dialogs -> " << cfg.out << "\n";
  }
  for (const gdiff::EvalRow& r : report.rows)
    if (!r.has_reference)
      std::cout << "eval: dialog " << r.dialog
                << " has no reference motion; jerk/velocity metrics skipped\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conversational co-speech gesture diffusion toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, ingest_args, train_args, sample_args, eval_args;
  CLI::App* gen = app.add_subcommand("gen-toy", "write a synthetic toy dataset");
  add_common(gen, gen_args);
  CLI::App* ing = app.add_subcommand("ingest", "build the training cache from a dataset");
  add_common(ing, ingest_args);
  CLI::App* tr = app.add_subcommand("train", "train a denoiser from the cache");
  add_common(tr, train_args);
  CLI::App* sa = app.add_subcommand("sample", "sample a dialog's gestures to BVH");
  add_common(sa, sample_args);
  CLI::App* ev = app.add_subcommand("eval", "objective metrics over a split");
  add_common(ev, eval_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_toy(resolve_config(gen_args));
    if (ing->parsed()) return cmd_ingest(resolve_config(ingest_args));
    if (tr->parsed()) return cmd_train(resolve_config(train_args));
    if (sa->parsed()) return cmd_sample(resolve_config(sample_args));
    if (ev->parsed()) return cmd_eval(resolve_config(eval_args));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
