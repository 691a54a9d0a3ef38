#include "ssacl/model.hpp"

#include <cstring>

#include "ssacl/errors.hpp"

namespace ssacl {

json ModelConfig::to_json() const {
  return json{{"width", width},
              {"layers", layers},
              {"heads", heads},
              {"patch_size", patch_size},
              {"image_size", image_size},
              {"channels", channels},
              {"max_report_len", max_report_len},
              {"text_max_len", text_max_len},
              {"pathology_slots", pathology_slots},
              {"tau_init", tau_init}};
}

ModelConfig ModelConfig::from_json(const json& doc) {
  ModelConfig c;
  c.width = doc.value("width", c.width);
  c.layers = doc.value("layers", c.layers);
  c.heads = doc.value("heads", c.heads);
  c.patch_size = doc.value("patch_size", c.patch_size);
  c.image_size = doc.value("image_size", c.image_size);
  c.channels = doc.value("channels", c.channels);
  c.max_report_len = doc.value("max_report_len", c.max_report_len);
  c.text_max_len = doc.value("text_max_len", c.text_max_len);
  c.pathology_slots = doc.value("pathology_slots", c.pathology_slots);
  c.tau_init = doc.value("tau_init", c.tau_init);
  return c;
}

Tokenizer make_tokenizer(const AnatomyGraph& graph) {
  std::vector<std::string> words = {"the", "shows", "is", "clear", ".", ","};
  for (const auto& id : graph.node_order()) {
    for (const auto& w : Tokenizer::split_words(graph.node(id).name)) words.push_back(w);
  }
  for (const auto& p : graph.pathology_order()) {
    for (const auto& w : Tokenizer::split_words(p)) words.push_back(w);
  }
  return Tokenizer(std::move(words));
}

SSACLModelImpl::SSACLModelImpl(ModelConfig cfg_in, std::shared_ptr<const AnatomyGraph> graph_in,
                               Tokenizer tokenizer_in)
    : cfg(cfg_in), graph(std::move(graph_in)), tokenizer(std::move(tokenizer_in)) {
  TextEncoderConfig tc;
  tc.vocab = tokenizer.vocab_size();
  tc.width = cfg.width;
  tc.layers = cfg.layers;
  tc.heads = cfg.heads;
  tc.max_len = cfg.text_max_len;
  text_encoder = register_module("text_encoder", TextEncoder(tc));

  VisualConfig vc;
  vc.image_size = cfg.image_size;
  vc.patch_size = cfg.patch_size;
  vc.channels = cfg.channels;
  vc.width = cfg.width;
  vc.layers = cfg.layers;
  vc.heads = cfg.heads;
  vc.n_nodes = static_cast<std::int64_t>(graph->node_count());
  visual_encoder = register_module("visual_encoder", VisualEncoder(vc));
  visual_decoder = register_module("visual_decoder", VisualDecoder(vc));

  ReportDecoderConfig rc;
  rc.vocab = tokenizer.vocab_size();
  rc.width = cfg.width;
  rc.layers = cfg.layers;
  rc.heads = cfg.heads;
  rc.max_report_len = cfg.max_report_len;
  rc.pathology_slots = cfg.pathology_slots;
  report_decoder = register_module("report_decoder", ReportDecoder(rc));

  img_proj = register_module("img_proj", torch::nn::Linear(cfg.width, cfg.width));
  log_tau = register_parameter("log_tau",
                               torch::full({}, std::log(cfg.tau_init), torch::kFloat32));

  // Cache leaf-name token ids and the per-parent child index plan.
  std::vector<std::string> leaf_names;
  for (const auto& leaf : graph->leaf_order()) {
    leaf_names.push_back(graph->node(leaf).name);
    leaf_node_indices_.push_back(graph->node_index(leaf));
  }
  leaf_name_ids_ = tokenizer.batch_encode(leaf_names, /*add_specials=*/true, cfg.text_max_len);

  for (const auto& id : graph->internal_order()) {
    std::vector<int> kids;
    for (const auto& c : graph->node(id).children) kids.push_back(graph->node_index(c));
    parent_groups_[static_cast<int>(kids.size())].emplace_back(graph->node_index(id),
                                                               std::move(kids));
  }
}

torch::Tensor SSACLModelImpl::leaf_queries() {
  return text_encoder(leaf_name_ids_).global;  // [M, D]
}

torch::Tensor SSACLModelImpl::restored_queries(std::int64_t batch) {
  auto all = restore_query_tensor(*graph, leaf_queries());  // [H, D]
  return all.unsqueeze(0).expand({batch, all.size(0), all.size(1)});
}

torch::Tensor SSACLModelImpl::tau() const {
  return torch::exp(log_tau).clamp(1e-3, 10.0);
}

LossBreakdown SSACLModelImpl::pretrain_step(const PretrainBatch& batch, std::uint64_t mask_seed,
                                            const PretrainFlags& flags) {
  const auto B = batch.images.size(0);
  auto queries = restored_queries(B);

  auto masked = mask_image(batch.images, flags.mask_ratio, mask_seed, visual_encoder->cfg);
  auto unmasked = mask_image(batch.images, 0.0, mask_seed, visual_encoder->cfg);
  auto fused_m = visual_encoder->fuse(masked, queries, visual_encoder->topology_for(masked));
  auto fused_u =
      visual_encoder->fuse(unmasked, queries, visual_encoder->topology_for(unmasked));

  LossBreakdown out;

  // Eq. 2: global masked reconstruction.
  auto decoded = visual_decoder->decode_masked_grid(fused_m, masked);
  out.ir = loss_ir(decoded, masked.masked_pixels);

  // Eqs. 3-4: hierarchical anatomy reconstruction, parents grouped by child
  // count so each group decodes as one batch.
  ReconTargets targets;
  for (const auto& [k, group] : parent_groups_) {
    std::vector<torch::Tensor> kid_tokens;
    std::vector<torch::Tensor> parent_tokens;
    for (const auto& [node_idx, kids] : group) {
      auto idx = torch::tensor(kids, torch::kLong);
      kid_tokens.push_back(fused_m.prompt_tokens.index_select(1, idx));  // [B, k, D]
      parent_tokens.push_back(fused_u.prompt_tokens.select(1, node_idx));
    }
    auto stacked = torch::cat(kid_tokens, 0);  // [G*B, k, D]
    auto patches = reconstruct_parent(visual_decoder, stacked);
    auto labels = parent_pseudolabel(visual_decoder, torch::cat(parent_tokens, 0));
    for (std::size_t gi = 0; gi < group.size(); ++gi) {
      const auto& id = graph->node_order()[static_cast<std::size_t>(group[gi].first)];
      targets.parent_patches[id] =
          patches.slice(0, static_cast<std::int64_t>(gi) * B,
                        static_cast<std::int64_t>(gi + 1) * B);
      targets.parent_pseudolabels[id] =
          labels.slice(0, static_cast<std::int64_t>(gi) * B,
                       static_cast<std::int64_t>(gi + 1) * B);
    }
  }
  out.ar = loss_ar(*graph, targets, flags.include_root_in_ar);

  // Eq. 5: global image-text contrastive loss on the masked-pass class token.
  auto text_out = text_encoder(batch.text_ids);
  auto g_img = torch::nn::functional::normalize(
      img_proj(fused_m.class_token), torch::nn::functional::NormalizeFuncOptions().dim(-1));
  out.cl = loss_cl(g_img, text_out.global, tau(), flags.symmetric_cl);

  // Eq. 6: anatomical consistency alignment on unmasked leaf tokens.
  if (flags.enable_ac) {
    auto leaf_idx = torch::tensor(leaf_node_indices_, torch::kLong);
    auto leaf_tokens = fused_u.prompt_tokens.index_select(1, leaf_idx);  // [B, M, D]
    auto bundle = build_similarity(leaf_tokens, text_out.global, flags.lambda, tau());
    out.ac = loss_ac(bundle, flags.soft_target_matrix);
  } else {
    out.ac = torch::zeros({}, out.cl.options());
  }

  // Eq. 7: anatomy-guided report generation.
  auto prefix =
      report_decoder->build_prefix(fused_u.prompt_tokens, batch.pathology_ids, batch.presence);
  out.lm = report_decoder->loss_lm(prefix, batch.report_ids);
  return out;
}

FusedOutput SSACLModelImpl::encode_unmasked(const torch::Tensor& images, bool need_attn) {
  auto batch = mask_image(images, 0.0, 0, visual_encoder->cfg);
  auto queries = restored_queries(images.size(0));
  return visual_encoder->fuse(batch, queries, visual_encoder->topology_for(batch), need_attn);
}

torch::Tensor SSACLModelImpl::class_features(const torch::Tensor& images) {
  return encode_unmasked(images).class_token;
}

torch::Tensor SSACLModelImpl::image_global(const torch::Tensor& images) {
  return torch::nn::functional::normalize(
      img_proj(class_features(images)), torch::nn::functional::NormalizeFuncOptions().dim(-1));
}

torch::Tensor SSACLModelImpl::text_global(const std::vector<std::string>& phrases) {
  auto ids = tokenizer.batch_encode(phrases, /*add_specials=*/true, cfg.text_max_len);
  return text_encoder(ids).global;
}

namespace {
void write_string(torch::serialize::OutputArchive& ar, const std::string& key,
                  const std::string& s) {
  auto t = torch::empty({static_cast<std::int64_t>(s.size())}, torch::kChar);
  if (!s.empty()) std::memcpy(t.data_ptr<std::int8_t>(), s.data(), s.size());
  ar.write(key, t);
}

std::string read_string(torch::serialize::InputArchive& ar, const std::string& key) {
  torch::Tensor t;
  ar.read(key, t);
  std::string s(static_cast<std::size_t>(t.numel()), '\0');
  if (t.numel() > 0) std::memcpy(s.data(), t.data_ptr<std::int8_t>(), s.size());
  return s;
}
}  // namespace

void SSACLModelImpl::save_checkpoint(const std::filesystem::path& path,
                                     const json& extra_meta) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive root;
  torch::serialize::OutputArchive params;
  this->save(params);
  root.write("model", params);

  json meta;
  meta["model_config"] = cfg.to_json();
  meta["graph_config"] = graph->config_text();
  meta["vocab"] = tokenizer.vocab();
  meta["extra"] = extra_meta;
  write_string(root, "meta/config", meta.dump());
  root.save_to(path.string());
}

std::shared_ptr<SSACLModelImpl> SSACLModelImpl::load_checkpoint(
    const std::filesystem::path& path, json* extra_meta) {
  torch::serialize::InputArchive root;
  root.load_from(path.string());
  json meta = json::parse(read_string(root, "meta/config"));

  auto graph = std::make_shared<AnatomyGraph>(
      AnatomyGraph::from_json_text(meta.at("graph_config").get<std::string>()));
  auto vocab = meta.at("vocab").get<std::vector<std::string>>();
  // Rebuild from the stored word list (specials are re-added by the ctor).
  std::vector<std::string> words(vocab.begin() + 4, vocab.end());
  auto model = std::make_shared<SSACLModelImpl>(
      ModelConfig::from_json(meta.at("model_config")), graph, Tokenizer(words));

  torch::serialize::InputArchive params;
  root.read("model", params);
  model->load(params);
  if (extra_meta) *extra_meta = meta.value("extra", json::object());
  return model;
}

}  // namespace ssacl
