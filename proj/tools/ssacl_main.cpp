// ssacl: synthetic-world pipeline driver.
//
// Subcommands: gen-data, pretrain, train-probe, generate, ground, evaluate.
// Exit codes: 0 success, 1 validation/config error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <random>

#include "ssacl/determinism.hpp"
#include "ssacl/errors.hpp"
#include "ssacl/pipeline.hpp"
#include "ssacl/trainer.hpp"

namespace fs = std::filesystem;
using namespace ssacl;

namespace {

json load_config_or_empty(const std::string& path) {
  if (path.empty()) return json::object();
  return json::parse(read_text_file(path));
}

void persist_effective_config(const fs::path& out, const json& cfg) {
  write_text_file(out / "effective_config.json", cfg.dump(2));
}

WorldSpec world_from_config(const json& cfg, const fs::path& config_dir) {
  if (!cfg.is_null() && !cfg.empty()) return WorldSpec::from_json(cfg, config_dir);
  // Built-in default: the shipped synthetic graph, looked up next to the
  // binary's source tree or the working directory.
  for (const auto& base : {fs::path("configs"), fs::path("../configs")}) {
    if (fs::exists(base / "world_default.json")) {
      return WorldSpec::load_file(base / "world_default.json");
    }
  }
  throw ValidationError("no world config given and configs/world_default.json not found");
}

int cmd_gen_data(const std::string& config_path, std::uint64_t seed, const fs::path& out,
                 int n, double train_frac, double val_frac) {
  auto cfg = load_config_or_empty(config_path);
  auto spec = world_from_config(cfg, config_path.empty()
                                         ? fs::current_path()
                                         : fs::path(config_path).parent_path());
  seed_everything(seed);
  auto samples = generate_dataset(spec, n, seed);

  DatasetSplits splits;
  const int n_train = static_cast<int>(n * train_frac);
  const int n_val = static_cast<int>(n * val_frac);
  for (int i = 0; i < n; ++i) {
    const auto& id = samples[static_cast<std::size_t>(i)].id;
    if (i < n_train) splits.train.push_back(id);
    else if (i < n_train + n_val) splits.val.push_back(id);
    else splits.test.push_back(id);
  }
  save_dataset(out, spec, samples, splits, seed);
  persist_effective_config(out, json{{"command", "gen-data"},
                                     {"n", n},
                                     {"seed", seed},
                                     {"train_frac", train_frac},
                                     {"val_frac", val_frac},
                                     {"world", spec.to_json()}});
  std::cout << "wrote " << n << " samples to " << out.string() << "\n";
  return 0;
}

int cmd_pretrain(const std::string& config_path, std::uint64_t seed, const fs::path& out,
                 const fs::path& data) {
  auto doc = load_config_or_empty(config_path);
  auto cfg = TrainConfig::from_json(doc);
  cfg.seed = seed;
  cfg.dataset_dir = data;
  cfg.out_dir = out;
  fs::create_directories(out);
  persist_effective_config(out, cfg.to_json());

  auto result = train(cfg);
  std::cout << "pretraining done; last checkpoint " << result.last_checkpoint.string() << "\n";
  if (!result.history.empty()) {
    std::cout << "epoch-1 total " << result.history.front().total << ", final total "
              << result.history.back().total << "\n";
  }
  return 0;
}

int cmd_train_probe(const std::string& config_path, std::uint64_t seed, const fs::path& out,
                    const fs::path& data, const fs::path& ckpt) {
  auto doc = load_config_or_empty(config_path);
  auto ds = load_dataset(data);
  auto model_ptr = SSACLModelImpl::load_checkpoint(ckpt);
  SSACLModel model(model_ptr);

  ProbeTrainConfig pc;
  pc.epochs = doc.value("probe_epochs", pc.epochs);
  pc.lr = doc.value("probe_lr", pc.lr);
  pc.seed = seed;
  seed_everything(seed);

  auto result = train_probe(model, ds.spec, ds.split("train"), ds.split("val"), pc);
  fs::create_directories(out);
  result.probe.save(out / "probe.ckpt");
  json summary{{"val_macro_f1", result.val_macro_f1},
               {"thresholds", result.probe.thresholds},
               {"pathologies", result.probe.pathology_order}};
  write_text_file(out / "probe_summary.json", summary.dump(2));
  persist_effective_config(out, json{{"command", "train-probe"},
                                     {"seed", seed},
                                     {"checkpoint", ckpt.string()},
                                     {"probe_epochs", pc.epochs},
                                     {"probe_lr", pc.lr}});
  std::cout << "probe val macro-F1 " << result.val_macro_f1 << "\n";
  return 0;
}

int cmd_generate(const std::string& config_path, std::uint64_t seed, const fs::path& out,
                 const fs::path& data, const fs::path& ckpt, const fs::path& probe_path,
                 const std::string& split, bool use_gt) {
  (void)config_path;
  seed_everything(seed);
  auto ds = load_dataset(data);
  auto model_ptr = SSACLModelImpl::load_checkpoint(ckpt);
  SSACLModel model(model_ptr);

  std::optional<PathologyProbe> probe;
  if (!use_gt) {
    if (probe_path.empty()) {
      throw ValidationError("generate needs --probe unless --use-gt-entities is set");
    }
    probe = PathologyProbe::load(probe_path, model->cfg.width);
  }
  auto reports = generate_reports(model, probe ? &*probe : nullptr, ds, split);
  fs::create_directories(out);
  write_reports_jsonl(out / "reports.jsonl", reports);
  persist_effective_config(out, json{{"command", "generate"},
                                     {"seed", seed},
                                     {"split", split},
                                     {"use_gt_entities", use_gt},
                                     {"checkpoint", ckpt.string()}});
  std::cout << "generated " << reports.size() << " reports to "
            << (out / "reports.jsonl").string() << "\n";
  return 0;
}

int cmd_ground(const std::string& config_path, std::uint64_t seed, const fs::path& out,
               const fs::path& data, const fs::path& ckpt, const std::string& split, int n,
               bool dump_maps) {
  (void)config_path;
  seed_everything(seed);
  auto ds = load_dataset(data);
  auto model_ptr = SSACLModelImpl::load_checkpoint(ckpt);
  SSACLModel model(model_ptr);

  auto run = run_grounding(model, ds, split, n);
  fs::create_directories(out);
  json doc{{"cnr_mean", run.metrics.cnr_mean},
           {"miou", run.metrics.miou},
           {"in_box_ratio", run.metrics.in_box_ratio},
           {"maps", run.maps.size()}};
  write_text_file(out / "grounding.json", doc.dump(2));
  if (dump_maps) {
    for (std::size_t i = 0; i < run.maps.size(); ++i) {
      write_grounding_map_pgm(out / "maps" / ("map_" + std::to_string(i) + ".pgm"),
                              run.maps[i]);
    }
  }
  persist_effective_config(out, json{{"command", "ground"},
                                     {"seed", seed},
                                     {"split", split},
                                     {"samples", n},
                                     {"dump_maps", dump_maps}});
  std::cout << "grounding over " << run.maps.size() << " boxes: CNR " << run.metrics.cnr_mean
            << ", mIoU " << run.metrics.miou << ", in/out " << run.metrics.in_box_ratio
            << "\n";
  return 0;
}

std::vector<std::string> reports_from_path(const fs::path& path, const Dataset* ds,
                                           std::vector<std::string>* ids_out) {
  std::vector<std::string> out;
  if (fs::is_directory(path)) {
    auto dataset = load_dataset(path);
    for (const auto* s : dataset.split("test")) {
      out.push_back(s->report);
      if (ids_out) ids_out->push_back(s->id);
    }
    return out;
  }
  for (const auto& r : read_reports_jsonl(path)) {
    out.push_back(r.report);
    if (ids_out) ids_out->push_back(r.sample_id);
  }
  (void)ds;
  return out;
}

int cmd_evaluate(const std::string& config_path, std::uint64_t seed, const fs::path& out,
                 const fs::path& pred_path, const fs::path& ref_path, const fs::path& data) {
  (void)seed;
  // The world spec (extraction vocabulary) comes from --data when given, else
  // from a dataset directory passed as --ref.
  std::optional<Dataset> ds;
  if (!data.empty()) {
    ds = load_dataset(data);
  } else if (fs::is_directory(ref_path)) {
    ds = load_dataset(ref_path);
  } else if (!config_path.empty()) {
    ds = Dataset{};
    ds->spec = WorldSpec::load_file(config_path);
  } else {
    throw ValidationError("evaluate needs --data, a dataset directory as --ref, or --config");
  }

  std::vector<std::string> pred_ids, ref_ids;
  auto pred = reports_from_path(pred_path, &*ds, &pred_ids);
  auto ref = reports_from_path(ref_path, &*ds, &ref_ids);
  if (pred.size() != ref.size()) {
    // Align by sample id when the id sets match.
    std::map<std::string, std::string> ref_by_id;
    for (std::size_t i = 0; i < ref.size(); ++i) ref_by_id[ref_ids[i]] = ref[i];
    std::vector<std::string> aligned;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      auto it = ref_by_id.find(pred_ids[i]);
      if (it == ref_by_id.end()) {
        throw ValidationError("prediction sample '" + pred_ids[i] + "' missing from references");
      }
      aligned.push_back(it->second);
    }
    ref = std::move(aligned);
  }

  auto metrics = evaluate_reports(ds->spec, pred, ref);
  fs::create_directories(out);
  write_text_file(out / "metrics.json", metrics.to_json().dump(2));
  persist_effective_config(out, json{{"command", "evaluate"},
                                     {"pred", pred_path.string()},
                                     {"ref", ref_path.string()}});
  std::cout << metrics.to_json().dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SS-ACL synthetic-world pipeline"};
  app.require_subcommand(1);

  std::string config;
  std::uint64_t seed = 7;
  std::string out = "out";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config file");
    cmd->add_option("--seed", seed, "RNG seed");
    cmd->add_option("--out", out, "output directory");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  int n = 128;
  double train_frac = 0.8, val_frac = 0.1;
  add_common(gen);
  gen->add_option("--n", n, "number of samples");
  gen->add_option("--train-frac", train_frac, "train split fraction");
  gen->add_option("--val-frac", val_frac, "val split fraction");

  auto* pre = app.add_subcommand("pretrain", "joint pretraining");
  std::string data;
  add_common(pre);
  pre->add_option("--data", data, "dataset directory")->required();

  auto* probe_cmd = app.add_subcommand("train-probe", "linear probe on frozen encoder");
  std::string ckpt;
  add_common(probe_cmd);
  probe_cmd->add_option("--data", data, "dataset directory")->required();
  probe_cmd->add_option("--ckpt", ckpt, "model checkpoint")->required();

  auto* genr = app.add_subcommand("generate", "anatomy-guided report generation");
  std::string probe_path, split = "test";
  bool use_gt = false;
  add_common(genr);
  genr->add_option("--data", data, "dataset directory")->required();
  genr->add_option("--ckpt", ckpt, "model checkpoint")->required();
  genr->add_option("--probe", probe_path, "probe checkpoint");
  genr->add_option("--split", split, "dataset split");
  genr->add_flag("--use-gt-entities", use_gt, "bypass the probe with ground-truth entities");

  auto* grd = app.add_subcommand("ground", "zero-shot phrase grounding");
  int ground_n = 100;
  bool dump_maps = false;
  add_common(grd);
  grd->add_option("--data", data, "dataset directory")->required();
  grd->add_option("--ckpt", ckpt, "model checkpoint")->required();
  grd->add_option("--split", split, "dataset split");
  grd->add_option("--n", ground_n, "number of samples");
  grd->add_flag("--dump-maps", dump_maps, "write attention maps as PGM files");

  auto* ev = app.add_subcommand("evaluate", "NLG + CE metrics");
  std::string pred_path, ref_path;
  add_common(ev);
  ev->add_option("--pred", pred_path, "predictions (reports.jsonl)")->required();
  ev->add_option("--ref", ref_path, "references (reports.jsonl or dataset dir)")->required();
  ev->add_option("--data", data, "dataset directory for the extraction vocabulary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config, seed, out, n, train_frac, val_frac);
    if (pre->parsed()) return cmd_pretrain(config, seed, out, data);
    if (probe_cmd->parsed()) return cmd_train_probe(config, seed, out, data, ckpt);
    if (genr->parsed())
      return cmd_generate(config, seed, out, data, ckpt, probe_path, split, use_gt);
    if (grd->parsed())
      return cmd_ground(config, seed, out, data, ckpt, split, ground_n, dump_maps);
    if (ev->parsed()) return cmd_evaluate(config, seed, out, pred_path, ref_path, data);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
