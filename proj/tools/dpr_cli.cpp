// dpr: differentiable patch retrieval toolkit.
//
// Subcommands: synth-bank, train, retrieve, verify. Machine-readable JSON
// goes to stdout / --out files; human logs go to stderr. Exit codes:
// 0 success, 2 usage or config error, 3 diverged training, 4 data error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dpr/bank.hpp"
#include "dpr/config.hpp"
#include "dpr/manifest.hpp"
#include "dpr/model.hpp"
#include "dpr/retrieval.hpp"
#include "dpr/trainer.hpp"
#include "dpr/verify.hpp"

namespace {

using json = nlohmann::json;
using namespace dpr;

long elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                               start)
      .count();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write '" + path + "'");
  os << text;
}

json metrics_to_json(const train::MetricsReport& m) {
  return json{{"gt_hit_rate", m.gt_hit_rate},
              {"cluster_purity", m.cluster_purity},
              {"mean_cooc_loss", m.mean_cooc_loss}};
}

// ----- synth-bank -----

struct SynthArgs {
  std::string out;
  int images = 16, per_image = 5, clusters = 8, d_feat = 16, categories = 0;
  double sigma = 0.05, sigma_image = 0.3;
  std::uint64_t seed = 1;
};

int run_synth_bank(const SynthArgs& a) {
  auto start = std::chrono::steady_clock::now();
  bank::SynthBankConfig cfg;
  cfg.num_images = a.images;
  cfg.patches_per_image = a.per_image;
  cfg.clusters = a.clusters;
  cfg.d_feat = a.d_feat;
  cfg.sigma = a.sigma;
  cfg.sigma_image = a.sigma_image;
  cfg.num_categories = a.categories;
  Rng rng(a.seed);
  auto pb = bank::synth_bank(rng, cfg);
  bank::save_bank(pb, a.out);

  RunManifest m;
  m.command = "synth-bank";
  m.config_digest = digest_hex(json{{"images", a.images},
                                    {"per_image", a.per_image},
                                    {"clusters", a.clusters},
                                    {"d_feat", a.d_feat},
                                    {"sigma", a.sigma},
                                    {"sigma_image", a.sigma_image},
                                    {"categories", a.categories},
                                    {"seed", a.seed}}
                                   .dump());
  m.seed = a.seed;
  m.wall_ms = elapsed_ms(start);
  m.outputs = {a.out};
  write_manifest(m, a.out + ".manifest.json");
  std::cerr << "wrote " << pb.records.size() << " records to " << a.out << "\n";
  return 0;
}

// ----- train -----

struct TrainArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(a.out_dir);
  std::string config_bytes = read_file(a.config_path);
  auto cfg = config::parse_config_text(config_bytes);
  std::string digest = digest_hex(config_bytes);

  if (a.seed) {
    for (std::size_t i = 0; i < cfg.optim_phases.size(); ++i)
      cfg.optim_phases[i].seed = *a.seed + i;
    cfg.cooc_optim.seed = *a.seed;
    if (cfg.data.synthetic) cfg.data.synthetic->seed = *a.seed;
  }
  std::uint64_t master_seed = cfg.optim_phases.front().seed;

  bank::PatchBank pb;
  std::vector<train::TaskSample> samples;
  int clusters = 0;
  if (cfg.data.synthetic) {
    auto task = train::make_synthetic_task(*cfg.data.synthetic);
    pb = std::move(task.bank);
    samples = std::move(task.samples);
    clusters = task.clusters;
  } else {
    pb = bank::load_bank(cfg.data.bank_path);
    if (!cfg.data.tasks_path.empty())
      samples = config::load_task_samples(cfg.data.tasks_path, pb.header.vocabulary);
  }

  model::ModelDims dims = cfg.dims;
  dims.vocab_size = pb.vocab_size();
  dims.d_feat = pb.header.d_feat;
  Rng init_rng(derive_seed(master_seed, 0x1217));
  auto params = model::init_model(dims, init_rng);
  params.cooc.margin = cfg.cooc_margin;

  json report;
  report["task"] = cfg.task == config::Task::retrieval
                       ? "retrieval"
                       : (cfg.task == config::Task::cooccurrence ? "cooccurrence" : "both");
  report["config_digest"] = digest;
  report["seed"] = master_seed;

  if (cfg.task != config::Task::retrieval) {
    auto crep = train::train_cooccurrence(pb, params.cooc, cfg.cooc_optim, cfg.cooc_steps_per_epoch);
    report["cooc"] = json{{"initial_loss", crep.initial_loss},
                          {"final_loss", crep.final_loss},
                          {"loss_curve", crep.loss_curve}};
  }

  if (cfg.task != config::Task::cooccurrence) {
    if (samples.empty())
      throw ConfigError("retrieval training needs task samples (synthetic bank or a tasks file)");
    ret::RetrievalConfig train_rc;
    train_rc.tau = cfg.retrieval.tau;
    train_rc.k = cfg.retrieval.k;
    train_rc.noise = cfg.retrieval.noise;
    train_rc.query_init = cfg.retrieval.query_init;
    ret::RetrievalConfig eval_rc = train_rc;
    eval_rc.tau = cfg.retrieval.eval_tau;
    eval_rc.noise = ret::NoiseMode::disabled;
    eval_rc.query_init = ret::QueryInit::given_feature;

    json curves{{"loss", json::array()},
                {"bbox", json::array()},
                {"sel", json::array()},
                {"occur", json::array()}};
    train::MetricsReport before, after;
    for (std::size_t phase = 0; phase < cfg.optim_phases.size(); ++phase) {
      auto rep = train::train_retrieval(pb, samples, params, cfg.weights, cfg.optim_phases[phase],
                                        train_rc, eval_rc, clusters);
      if (phase == 0) before = rep.before;
      after = rep.after;
      for (double v : rep.loss_curve) curves["loss"].push_back(v);
      for (double v : rep.bbox_curve) curves["bbox"].push_back(v);
      for (double v : rep.sel_curve) curves["sel"].push_back(v);
      for (double v : rep.occur_curve) curves["occur"].push_back(v);
    }
    report["before"] = metrics_to_json(before);
    report["after"] = metrics_to_json(after);
    report["curves"] = curves;
    report["bbox_mean_coord_error"] = train::mean_bbox_error(samples, params);
  }

  std::string checkpoint_path = a.out_dir + "/checkpoint.json";
  std::string report_path = a.out_dir + "/report.json";
  model::save_checkpoint(params, checkpoint_path);
  std::string report_text = report.dump(2) + "\n";
  write_text(report_path, report_text);
  std::cout << report_text;

  RunManifest m;
  m.command = "train";
  m.config_digest = digest;
  m.seed = master_seed;
  m.wall_ms = elapsed_ms(start);
  m.outputs = {checkpoint_path, report_path};
  write_manifest(m, a.out_dir + "/manifest.json");
  return 0;
}

// ----- retrieve -----

struct RetrieveArgs {
  std::string bank_path, graph_path, checkpoint_path, out;
  double tau = 0.01;
  int k = 10;
  std::string noise = "disabled";
  std::string query_init = "graph";
  std::uint64_t seed = 0;
};

int run_retrieve(const RetrieveArgs& a) {
  auto pb = bank::load_bank(a.bank_path);
  auto params = model::load_checkpoint(a.checkpoint_path);
  std::string graph_text = read_file(a.graph_path);
  auto graph = sg::parse_scene_graph(graph_text, pb.header.vocabulary);
  if (graph.user_object_count == 0) throw ValidationError("graph has no objects");

  ret::RetrievalConfig rc;
  rc.tau = a.tau;
  rc.k = a.k;
  rc.noise = a.noise == "gumbel" ? ret::NoiseMode::gumbel : ret::NoiseMode::disabled;
  rc.query_init = a.query_init == "random" ? ret::QueryInit::random_candidate
                                           : ret::QueryInit::given_feature;

  ad::Tape tape;
  auto bound = train::bind_model(tape, params);
  auto feats = sg::encode_graph(tape, bound.encoder, graph);

  std::vector<ad::Var> queries;
  std::vector<std::pair<Vec, int>> objects;
  for (int i = 0; i < graph.user_object_count; ++i) {
    ad::Var q = tape.affine(bound.query_w, bound.query_b, feats[i].feature, params.query_fc);
    queries.push_back(q);
    objects.push_back({tape.val(q), graph.objects[i].category});
  }
  auto cs = bank::build_candidates(pb, objects, rc.k);

  std::vector<ad::Var> embedded;
  for (int rec : cs.flat)
    embedded.push_back(losses::mlp2_forward(tape, bound.embed, tape.leaf(pb.records[rec].feature)));

  std::optional<ad::Var> init_query;
  if (rc.query_init == ret::QueryInit::given_feature)
    init_query = losses::mlp2_forward(tape, bound.embed, tape.avg_pool(queries));
  Rng rng(a.seed);
  auto sel = ret::iterative_retrieve(tape, cs, embedded, rc, rng, init_query);

  // Embedding-space distance of every candidate to the query start (the
  // first round's query), noise-independent.
  Vec q0val = init_query ? tape.val(*init_query) : tape.val(embedded[sel.init_candidate]);

  json objs = json::array();
  std::vector<ad::Var> picked_feats;
  for (std::size_t g = 0; g < cs.group_count(); ++g) {
    json cands = json::array();
    double score_sum = 0.0;
    for (int fi : cs.groups[g]) {
      const auto& rec = pb.records[cs.flat[fi]];
      cands.push_back(json{{"patch_id", rec.id},
                           {"image", rec.image},
                           {"distance", l2_dist(q0val, tape.val(embedded[fi]))},
                           {"score", sel.scores[fi]}});
      score_sum += sel.scores[fi];
    }
    int pick_fi = -1;
    for (int fi : sel.selected_hard)
      if (cs.group_of[fi] == static_cast<int>(g)) pick_fi = fi;
    const auto& pick = pb.records[cs.flat[pick_fi]];
    picked_feats.push_back(tape.leaf(pick.feature));
    objs.push_back(json{{"object_id", graph.objects[g].id},
                        {"category", pb.token_of(graph.objects[g].category)},
                        {"candidates", cands},
                        {"hard_pick", pick.id},
                        {"hard_pick_image", pick.image},
                        {"score_sum", score_sum}});
  }
  double cooc = tape.val(losses::cooccurrence_loss(tape, bound.cooc, picked_feats))[0];

  json report{{"objects", objs},
              {"cooc_loss", cooc},
              {"inputs", json{{"bank_digest", digest_hex(read_file(a.bank_path))},
                              {"graph_digest", digest_hex(graph_text)},
                              {"checkpoint_digest", digest_hex(read_file(a.checkpoint_path))}}},
              {"flags", json{{"tau", a.tau},
                             {"k", a.k},
                             {"noise", a.noise},
                             {"query_init", a.query_init},
                             {"seed", a.seed}}}};
  std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) write_text(a.out, text);
  return 0;
}

// ----- verify -----

int run_verify(const std::string& suite, std::uint64_t seed, int trials) {
  auto checks = verify::run_suite(suite, seed, trials);
  bool all = true;
  json jchecks = json::array();
  for (const auto& c : checks) {
    all &= c.pass;
    std::cerr << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    jchecks.push_back(json{{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  }
  std::cout << json{{"suite", suite}, {"pass", all}, {"checks", jchecks}}.dump(2) << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable patch retrieval toolkit"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-bank", "generate a clustered synthetic patch bank");
  synth->add_option("--out", sa.out, "bank file to write")->required();
  synth->add_option("--images", sa.images)->check(CLI::PositiveNumber);
  synth->add_option("--per-image", sa.per_image)->check(CLI::PositiveNumber);
  synth->add_option("--clusters", sa.clusters)->check(CLI::PositiveNumber);
  synth->add_option("--d-feat", sa.d_feat)->check(CLI::PositiveNumber);
  synth->add_option("--sigma", sa.sigma)->check(CLI::NonNegativeNumber);
  synth->add_option("--sigma-image", sa.sigma_image)->check(CLI::NonNegativeNumber);
  synth->add_option("--categories", sa.categories)->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", sa.seed);

  TrainArgs ta;
  std::uint64_t seed_override = 0;
  auto* tr = app.add_subcommand("train", "run the training pipeline from a config");
  tr->add_option("--config", ta.config_path, "experiment config JSON")->required();
  tr->add_option("--out", ta.out_dir, "output directory");
  auto* seed_opt = tr->add_option("--seed", seed_override, "override every phase seed");

  RetrieveArgs ra;
  auto* re = app.add_subcommand("retrieve", "retrieve patches for a scene graph");
  re->add_option("--bank", ra.bank_path)->required();
  re->add_option("--graph", ra.graph_path)->required();
  re->add_option("--checkpoint", ra.checkpoint_path)->required();
  re->add_option("--tau", ra.tau)->check(CLI::PositiveNumber);
  re->add_option("--k", ra.k)->check(CLI::PositiveNumber);
  re->add_option("--noise", ra.noise)->check(CLI::IsMember({"gumbel", "disabled"}));
  re->add_option("--query-init", ra.query_init)->check(CLI::IsMember({"graph", "random"}));
  re->add_option("--seed", ra.seed);
  re->add_option("--out", ra.out, "also write the report to this path");

  std::string suite;
  std::uint64_t vseed = 7;
  int vtrials = 100000;
  auto* ve = app.add_subcommand("verify", "run a verification suite");
  ve->add_option("suite", suite, "gradcheck | sampling | oracle | properties | all")->required();
  ve->add_option("--seed", vseed);
  ve->add_option("--trials", vtrials)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return run_synth_bank(sa);
    if (*tr) {
      if (*seed_opt) ta.seed = seed_override;
      return run_train(ta);
    }
    if (*re) return run_retrieve(ra);
    if (*ve) return run_verify(suite, vseed, vtrials);
  } catch (const TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const UnsupportedTermError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const BankLoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const NoCandidatesError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
