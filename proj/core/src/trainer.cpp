#include "ssacl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "ssacl/determinism.hpp"
#include "ssacl/errors.hpp"
#include "ssacl/preprocess.hpp"
#include "ssacl/probe.hpp"

namespace ssacl {

torch::Tensor total_loss(const torch::Tensor& ir, const torch::Tensor& ar,
                         const torch::Tensor& ac, const torch::Tensor& cl,
                         const torch::Tensor& lm, const LossWeights& w) {
  const std::pair<const char*, const torch::Tensor*> parts[] = {
      {"ir", &ir}, {"ar", &ar}, {"ac", &ac}, {"cl", &cl}, {"lm", &lm}};
  for (const auto& [name, t] : parts) {
    if (!torch::isfinite(*t).all().item<bool>()) {
      throw NonFiniteLoss(std::string("non-finite loss component '") + name + "'");
    }
  }
  return w.alpha1 * (ir + ar) + w.alpha2 * (ac + cl) + w.alpha3 * lm;
}

TrainConfig TrainConfig::from_json(const json& doc) {
  TrainConfig c;
  c.lambda = doc.value("lambda", c.lambda);
  c.mask_ratio = doc.value("mask_ratio", c.mask_ratio);
  c.tau_init = doc.value("tau_init", c.tau_init);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.epochs = doc.value("epochs", c.epochs);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.weight_decay = doc.value("weight_decay", c.weight_decay);
  c.warmup_epochs = doc.value("warmup_epochs", c.warmup_epochs);
  c.seed = doc.value("seed", c.seed);
  c.weights.alpha1 = doc.value("alpha1", c.weights.alpha1);
  c.weights.alpha2 = doc.value("alpha2", c.weights.alpha2);
  c.weights.alpha3 = doc.value("alpha3", c.weights.alpha3);
  if (doc.contains("model")) c.model = ModelConfig::from_json(doc.at("model"));
  c.model.tau_init = c.tau_init;
  c.augment = doc.value("augment", c.augment);
  c.symmetric_cl = doc.value("symmetric_cl", c.symmetric_cl);
  c.soft_target_matrix = doc.value("soft_target_matrix", c.soft_target_matrix);
  c.include_root_in_ar = doc.value("include_root_in_ar", c.include_root_in_ar);
  c.enable_ac = doc.value("enable_ac", c.enable_ac);
  c.val_every = doc.value("val_every", c.val_every);
  if (doc.contains("dataset_dir")) c.dataset_dir = doc.at("dataset_dir").get<std::string>();
  if (doc.contains("out_dir")) c.out_dir = doc.at("out_dir").get<std::string>();
  return c;
}

json TrainConfig::to_json() const {
  json doc;
  doc["lambda"] = lambda;
  doc["mask_ratio"] = mask_ratio;
  doc["tau_init"] = tau_init;
  doc["batch_size"] = batch_size;
  doc["epochs"] = epochs;
  doc["learning_rate"] = learning_rate;
  doc["weight_decay"] = weight_decay;
  doc["warmup_epochs"] = warmup_epochs;
  doc["seed"] = seed;
  doc["alpha1"] = weights.alpha1;
  doc["alpha2"] = weights.alpha2;
  doc["alpha3"] = weights.alpha3;
  doc["model"] = model.to_json();
  doc["augment"] = augment;
  doc["symmetric_cl"] = symmetric_cl;
  doc["soft_target_matrix"] = soft_target_matrix;
  doc["include_root_in_ar"] = include_root_in_ar;
  doc["enable_ac"] = enable_ac;
  doc["val_every"] = val_every;
  doc["dataset_dir"] = dataset_dir.string();
  doc["out_dir"] = out_dir.string();
  return doc;
}

namespace {

struct BatchAssembler {
  const WorldSpec* spec;
  const SSACLModelImpl* model;
  const TrainConfig* cfg;

  SSACLModelImpl::PretrainBatch assemble(const std::vector<const Sample*>& samples,
                                         std::uint64_t aug_seed) const {
    std::vector<torch::Tensor> images;
    std::vector<std::string> reports;
    images.reserve(samples.size());
    for (const auto* s : samples) {
      images.push_back(s->image);
      reports.push_back(s->report);
    }
    PreprocessOptions popts;
    popts.target_size = static_cast<int>(cfg->model.image_size);
    popts.augment = cfg->augment;

    SSACLModelImpl::PretrainBatch batch;
    batch.images = preprocess(torch::stack(images), popts, aug_seed);
    batch.text_ids =
        model->tokenizer.batch_encode(reports, /*add_specials=*/true, cfg->model.text_max_len);
    batch.report_ids = model->tokenizer.batch_encode(reports, /*add_specials=*/false,
                                                     cfg->model.max_report_len);

    const auto B = static_cast<std::int64_t>(samples.size());
    auto path_ids = torch::full({B, cfg->model.pathology_slots},
                                static_cast<std::int64_t>(Tokenizer::kPad), torch::kLong);
    auto presence = torch::zeros({B, static_cast<std::int64_t>(model->graph->node_count())},
                                 torch::kBool);
    for (std::int64_t b = 0; b < B; ++b) {
      std::set<std::string> names;
      for (const auto& [p, leaf] : samples[static_cast<std::size_t>(b)]->pathologies) {
        names.insert(p);
      }
      std::int64_t slot = 0;
      for (const auto& name : names) {
        if (slot >= cfg->model.pathology_slots) break;
        path_ids[b][slot++] = model->tokenizer.word_id(name);
      }
      std::vector<std::string> name_vec(names.begin(), names.end());
      auto leaves = names.empty()
                        ? std::vector<std::string>(model->graph->leaf_order().begin(),
                                                   model->graph->leaf_order().end())
                        : model->graph->pathologies_to_leaves(name_vec);
      presence[b] = build_presence(*model->graph, leaves);
    }
    batch.pathology_ids = path_ids;
    batch.presence = presence;
    return batch;
  }
};

void set_lr(torch::optim::AdamW& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
  }
}

double schedule_lr(const TrainConfig& cfg, std::int64_t step, std::int64_t steps_per_epoch) {
  const auto warmup = static_cast<double>(cfg.warmup_epochs) * steps_per_epoch;
  const auto total = static_cast<double>(cfg.epochs) * steps_per_epoch;
  if (warmup > 0 && step < warmup) {
    return cfg.learning_rate * (static_cast<double>(step) + 1.0) / warmup;
  }
  const double progress = total > warmup
                              ? (static_cast<double>(step) - warmup) / (total - warmup)
                              : 1.0;
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, progress)));
}

void append_metrics(const std::filesystem::path& path, const EpochMetrics& m) {
  json row;
  row["epoch"] = m.epoch;
  row["ir"] = m.ir;
  row["ar"] = m.ar;
  row["ac"] = m.ac;
  row["cl"] = m.cl;
  row["lm"] = m.lm;
  row["total"] = m.total;
  row["lr"] = m.lr;
  if (m.val_total) row["val_total"] = *m.val_total;
  std::ofstream out(path, std::ios::app);
  out << row.dump() << "\n";
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  seed_everything(cfg.seed);

  auto ds = load_dataset(cfg.dataset_dir);
  auto train_samples = ds.split("train");
  auto val_samples = ds.split("val");
  if (train_samples.size() < 2) {
    throw ValidationError("training split needs at least 2 samples");
  }

  std::filesystem::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir / "train_config.json", cfg.to_json().dump(2));

  auto tokenizer = make_tokenizer(*ds.spec.graph);
  auto model = std::make_shared<SSACLModelImpl>(cfg.model, ds.spec.graph, tokenizer);
  model->train();

  torch::optim::AdamW opt(model->parameters(), torch::optim::AdamWOptions(cfg.learning_rate)
                                                   .weight_decay(cfg.weight_decay));

  int start_epoch = 0;
  const auto resume_model = cfg.out_dir / "last.ckpt";
  const auto resume_opt = cfg.out_dir / "last.optim";
  double best_val = std::numeric_limits<double>::infinity();
  if (std::filesystem::exists(resume_model) && std::filesystem::exists(resume_opt)) {
    json extra;
    auto restored = SSACLModelImpl::load_checkpoint(resume_model, &extra);
    model = restored;
    model->train();
    opt = torch::optim::AdamW(model->parameters(), torch::optim::AdamWOptions(cfg.learning_rate)
                                                       .weight_decay(cfg.weight_decay));
    torch::serialize::InputArchive ar;
    ar.load_from(resume_opt.string());
    opt.load(ar);
    start_epoch = extra.value("epoch", 0);
    best_val = extra.value("best_val", best_val);
  }

  PretrainFlags flags;
  flags.lambda = cfg.lambda;
  flags.mask_ratio = cfg.mask_ratio;
  flags.symmetric_cl = cfg.symmetric_cl;
  flags.soft_target_matrix = cfg.soft_target_matrix;
  flags.include_root_in_ar = cfg.include_root_in_ar;
  flags.enable_ac = cfg.enable_ac;

  BatchAssembler assembler{&ds.spec, model.get(), &cfg};
  const auto steps_per_epoch = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(train_samples.size()) / cfg.batch_size);

  TrainResult result;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 7000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics em;
    em.epoch = epoch + 1;
    std::int64_t steps = 0;
    for (std::size_t off = 0; off + 1 < order.size(); off += cfg.batch_size) {
      const auto take = std::min<std::size_t>(cfg.batch_size, order.size() - off);
      if (take < 2) break;  // contrastive losses need N >= 2
      std::vector<const Sample*> batch_samples;
      batch_samples.reserve(take);
      for (std::size_t i = 0; i < take; ++i) batch_samples.push_back(train_samples[order[off + i]]);

      const auto step_id = static_cast<std::uint64_t>(epoch) * 1000000ULL +
                           static_cast<std::uint64_t>(steps);
      const double lr =
          schedule_lr(cfg, static_cast<std::int64_t>(epoch) * steps_per_epoch + steps,
                      steps_per_epoch);
      set_lr(opt, lr);
      em.lr = lr;

      auto batch = assembler.assemble(batch_samples, mix_seed(cfg.seed, 31000 + step_id));
      try {
        auto losses = model->pretrain_step(batch, mix_seed(cfg.seed, 17000 + step_id), flags);
        auto loss = total_loss(losses.ir, losses.ar, losses.ac, losses.cl, losses.lm,
                               cfg.weights);
        opt.zero_grad();
        loss.backward();
        opt.step();

        em.ir += losses.ir.item<double>();
        em.ar += losses.ar.item<double>();
        em.ac += losses.ac.item<double>();
        em.cl += losses.cl.item<double>();
        em.lm += losses.lm.item<double>();
        em.total += loss.item<double>();
      } catch (const NonFiniteLoss& e) {
        throw NonFiniteLoss(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) +
                            " step " + std::to_string(steps));
      }
      ++steps;
    }
    if (steps > 0) {
      em.ir /= steps;
      em.ar /= steps;
      em.ac /= steps;
      em.cl /= steps;
      em.lm /= steps;
      em.total /= steps;
    }

    if (!val_samples.empty() && cfg.val_every > 0 && (epoch + 1) % cfg.val_every == 0) {
      torch::NoGradGuard no_grad;
      model->eval();
      double vtotal = 0;
      std::int64_t vsteps = 0;
      for (std::size_t off = 0; off + 1 < val_samples.size(); off += cfg.batch_size) {
        const auto take = std::min<std::size_t>(cfg.batch_size, val_samples.size() - off);
        if (take < 2) break;
        std::vector<const Sample*> vb(val_samples.begin() + off,
                                      val_samples.begin() + off + take);
        auto batch = assembler.assemble(vb, 0);
        auto losses = model->pretrain_step(
            batch, mix_seed(cfg.seed, 990000 + static_cast<std::uint64_t>(off)), flags);
        vtotal += total_loss(losses.ir, losses.ar, losses.ac, losses.cl, losses.lm, cfg.weights)
                      .item<double>();
        ++vsteps;
      }
      model->train();
      if (vsteps > 0) em.val_total = vtotal / vsteps;
    }

    append_metrics(cfg.out_dir / "metrics.jsonl", em);
    result.history.push_back(em);

    json extra;
    extra["epoch"] = epoch + 1;
    extra["train_config"] = cfg.to_json();
    extra["best_val"] = best_val;
    model->save_checkpoint(cfg.out_dir / "last.ckpt", extra);
    {
      torch::serialize::OutputArchive ar;
      opt.save(ar);
      ar.save_to((cfg.out_dir / "last.optim").string());
    }
    if (em.val_total && *em.val_total < best_val) {
      best_val = *em.val_total;
      extra["best_val"] = best_val;
      model->save_checkpoint(cfg.out_dir / "best.ckpt", extra);
    }
  }

  result.last_checkpoint = cfg.out_dir / "last.ckpt";
  result.best_checkpoint = std::filesystem::exists(cfg.out_dir / "best.ckpt")
                               ? cfg.out_dir / "best.ckpt"
                               : cfg.out_dir / "last.ckpt";
  return result;
}

}  // namespace ssacl
