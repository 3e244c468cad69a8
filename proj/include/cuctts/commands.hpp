// Copyright (c) 2026 The cuctts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry points: preprocess, embed-context, train, synthesize,
// evaluate and case-study. Every flag has a config-file equivalent and
// flags override the file; the resolved configuration is written next to
// each command's outputs.

#ifndef CUCTTS_COMMANDS_HPP_
#define CUCTTS_COMMANDS_HPP_

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cuctts/config.hpp"
#include "cuctts/context_encoder.hpp"
#include "cuctts/corpus.hpp"
#include "cuctts/decoder.hpp"
#include "cuctts/evaluation.hpp"
#include "cuctts/g2p.hpp"
#include "cuctts/model.hpp"
#include "cuctts/toy_corpus.hpp"
#include "cuctts/training.hpp"

namespace cuctts::cli {

namespace fs = std::filesystem;

/// Environment variable naming the default context cache directory.
inline constexpr const char* kCacheEnv = "CUCTTS_CONTEXT_CACHE";

inline std::string default_cache_dir() {
  const char* v = std::getenv(kCacheEnv);
  return v ? v : "";
}

/// Options whose values are copied into a RunConfig field only when given on
/// the command line, after the config file has been applied.
class FlagBinder {
 public:
  explicit FlagBinder(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* bind(const std::string& name, T& field, const std::string& desc) {
    auto value = std::make_shared<T>(field);
    auto* opt = app_->add_option(name, *value, desc)->capture_default_str();
    apply_.push_back([value, &field, opt] {
      if (opt->count()) field = *value;
    });
    return opt;
  }

  CLI::Option* bind_flag(const std::string& name, bool& field, const std::string& desc) {
    auto value = std::make_shared<bool>(field);
    auto* opt = app_->add_flag(name, *value, desc)->capture_default_str();
    apply_.push_back([value, &field, opt] {
      if (opt->count()) field = *value;
    });
    return opt;
  }

  CLI::Option* bind_variant(const std::string& name, Variant& field, const std::string& desc) {
    auto value = std::make_shared<std::string>(to_string(field));
    auto* opt = app_->add_option(name, *value, desc)
                    ->capture_default_str()
                    ->check(CLI::IsMember({"baseline", "global_vae", "fine_grained_vae", "cvae", "cuc_vae"}));
    apply_.push_back([value, &field, opt] {
      if (opt->count()) field = parse_variant(*value);
    });
    return opt;
  }

  void apply() const {
    for (const auto& f : apply_) f();
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void()>> apply_;
};

/// Loads `config_path` (if any) into `rc`, then applies the flags.
inline void resolve(RunConfig& rc, const std::string& config_path, const FlagBinder& flags) {
  if (!config_path.empty()) {
    rc = load_run_config(config_path);
    if (rc.paths.context_cache.empty()) rc.paths.context_cache = default_cache_dir();
  }
  flags.apply();
}

inline void dump_config(const fs::path& dir, const RunConfig& rc, const std::string& name) {
  fs::create_directories(dir);
  save_run_config(dir / (name + ".resolved.json"), rc);
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
  std::string config;
  std::string corpus;
  std::string aligner_dir;
  std::string lexicon;
  double match_threshold = 0.85;
  int toy_utterances = 0;
};

inline int run_preprocess(RunConfig& rc, const PreprocessArgs& a) {
  corpus::PreprocessOptions opt;
  if (a.toy_utterances > 0) {
    toy::write_corpus(a.corpus, a.toy_utterances, rc.train.seed, rc.audio);
    std::cerr << "wrote a synthetic corpus of " << a.toy_utterances << " utterances to " << a.corpus << '\n';
  }
  opt.corpus_dir = a.corpus;
  opt.out_dir = rc.paths.out_dir;
  opt.context_size = rc.model.context_size;
  if (!a.aligner_dir.empty()) opt.aligner_dir = fs::path(a.aligner_dir);
  if (!a.lexicon.empty()) opt.lexicon = fs::path(a.lexicon);
  opt.match_threshold = a.match_threshold;
  opt.g2p = rc.g2p;
  opt.audio = rc.audio;
  const auto report = corpus::preprocess(opt);
  rc.paths.manifest = (fs::path(rc.paths.out_dir) / "manifest.jsonl").string();
  dump_config(rc.paths.out_dir, rc, "preprocess");
  std::cout << "processed " << report.records.size() - report.failures.size() << " of " << report.records.size()
            << " utterances; manifest at " << rc.paths.manifest << '\n';
  if (!report.failures.empty()) {
    std::cerr << report.failures.size() << " utterance(s) failed:\n";
    for (const auto& [id, why] : report.failures) std::cerr << "  " << id << ": " << why << '\n';
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// embed-context

/// Writes each distinct rendered pair of the manifest once per line, the
/// input expected by tools/bert_pair_embed.py.
inline std::size_t list_pairs(const std::vector<corpus::UtteranceRecord>& records, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const auto texts = corpus::text_index(records);
  std::set<std::string> seen;
  for (const auto& r : records)
    for (const auto& p : context::make_pairs(corpus::context_texts(r, texts)))
      if (seen.insert(p.render()).second) os << p.render() << '\n';
  return seen.size();
}

inline int run_embed_context(RunConfig& rc, const std::string& pairs_out = {}) {
  if (rc.paths.manifest.empty()) throw std::invalid_argument("--manifest is required");
  if (!pairs_out.empty()) {
    const auto n = list_pairs(corpus::read_manifest(rc.paths.manifest), pairs_out);
    std::cout << "wrote " << n << " distinct pairs to " << pairs_out << '\n';
    return 0;
  }
  if (rc.paths.context_cache.empty())
    throw std::invalid_argument(std::string("--cache-dir is required (or set ") + kCacheEnv + ")");
  const auto records = corpus::read_manifest(rc.paths.manifest);
  const auto embedder = context::make_embedder(rc.paths.embedder, rc.model.d_ctx, rc.paths.embedder_path);
  context::precompute_and_cache(records, *embedder, rc.paths.context_cache);
  dump_config(rc.paths.context_cache, rc, "embed-context");
  std::cout << "cached " << records.size() << " context windows in " << rc.paths.context_cache << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::string resume;
};

inline LossBreakdown run_train(RunConfig& rc, const TrainArgs& a, bool context_size_given = false) {
  if (rc.paths.manifest.empty()) throw std::invalid_argument("--manifest is required");
  if (context_size_given && !uses_context(rc.model.variant))
    std::cerr << "warning: variant " << to_string(rc.model.variant) << " does not use context; ignoring L\n";
  const auto records = corpus::read_manifest(rc.paths.manifest);
  const auto speakers = speaker_names(records);
  rc.model.num_speakers = static_cast<int>(std::max<std::size_t>(speakers.size(), 1));
  const auto examples = load_training_set<float>(records, rc.model, speakers, rc.paths.context_cache);
  TTSModel<float> model(rc.model, rc.train.seed);
  model.speakers().set_names(speakers);
  Trainer<float> trainer(model, rc.train);
  if (!a.resume.empty()) trainer.load_checkpoint(a.resume);
  const fs::path out = rc.paths.out_dir;
  dump_config(out, rc, "train");
  std::ofstream log(out / "train_log.jsonl", a.resume.empty() ? std::ios::trunc : std::ios::app);
  std::cerr << to_string(rc.model.variant) << ": " << examples.size() << " utterances, "
            << model.parameter_count() << " trainable parameters\n";
  train(trainer, examples, rc.train, out, &log);
  // Report the loss of a final full pass without updating the weights.
  std::vector<const UtteranceInput<float>*> all;
  for (const auto& e : examples) all.push_back(&e.input);
  std::mt19937_64 rng(rc.train.seed);
  std::vector<ForwardResult<float>> results;
  {
    ag::NoGradGuard guard;
    for (const auto* in : all) results.push_back(model.forward(*in, rng, 0.0));
  }
  const long s = trainer.global_step();
  auto loss = elbo_loss(results, all, kl_anneal(s, rc.train.kl_warmup_steps, rc.train.beta1_max),
                        kl_anneal(s, rc.train.kl_warmup_steps, rc.train.beta2_max));
  std::cout << nlohmann::json(loss.parts).dump() << '\n';
  return loss.parts;
}

// ---------------------------------------------------------------------------
// synthesize

struct SynthesizeArgs {
  std::string config;
  std::string checkpoint;
  std::string text;
  std::vector<std::string> context;  ///< L preceding then L following texts
  std::string manifest_ids;          ///< comma-separated ids from --manifest
  std::string speaker;
  std::string lexicon;
  std::string mode = "sample";
  double tau = 1.0;
  int num_samples = 1;
  std::uint64_t seed = 1;
  bool standard_gaussian = false;
  std::string name = "utt";
  bool no_fallback = false;
};

struct SynthesisJob {
  std::string name;
  std::string text;
  std::vector<std::string> window;  ///< 2L + 1 texts, sentence in the middle
  std::string speaker;
};

inline std::vector<SynthesisJob> synthesis_jobs(const RunConfig& rc, const SynthesizeArgs& a, const ModelConfig& mc) {
  std::vector<SynthesisJob> jobs;
  const int L = mc.context_size;
  if (!a.manifest_ids.empty()) {
    if (rc.paths.manifest.empty()) throw std::invalid_argument("--ids requires --manifest");
    const auto records = corpus::read_manifest(rc.paths.manifest);
    const auto texts = corpus::text_index(records);
    std::stringstream ss(a.manifest_ids);
    std::string id;
    while (std::getline(ss, id, ',')) {
      auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.id == id; });
      if (it == records.end()) throw std::invalid_argument("id " + id + " is not in the manifest");
      SynthesisJob j{id, it->text, {}, a.speaker.empty() ? it->speaker_id : a.speaker};
      if (uses_context(mc.variant)) {
        j.window = corpus::context_texts(*it, texts);
        if (static_cast<int>(j.window.size()) != 2 * L + 1)
          throw std::invalid_argument("manifest context of " + id + " does not match the model's L=" +
                                      std::to_string(L));
      }
      jobs.push_back(std::move(j));
    }
    return jobs;
  }
  if (a.text.empty()) throw std::invalid_argument("pass --text or --manifest with --ids");
  SynthesisJob j{a.name, a.text, {}, a.speaker};
  if (uses_context(mc.variant)) {
    if (a.context.empty())
      throw std::invalid_argument("variant cuc_vae needs cross-utterance context: pass --context " +
                                  std::to_string(2 * L) + " times (" + std::to_string(L) +
                                  " preceding then " + std::to_string(L) +
                                  " following sentences; use \"\" for a document boundary)");
    if (static_cast<int>(a.context.size()) != 2 * L)
      throw std::invalid_argument("--context was given " + std::to_string(a.context.size()) +
                                  " times; the model expects 2L = " + std::to_string(2 * L));
    j.window.assign(a.context.begin(), a.context.begin() + L);
    j.window.push_back(a.text);
    j.window.insert(j.window.end(), a.context.begin() + L, a.context.end());
  }
  jobs.push_back(std::move(j));
  return jobs;
}

/// Builds the inference input for one sentence.
inline UtteranceInput<float> inference_input(const TTSModel<float>& model, const text::G2P& g2p,
                                             const context::SentencePairEmbedder& embedder, const SynthesisJob& job) {
  UtteranceInput<float> in;
  const auto phonemes = g2p(job.text);
  in.phoneme_ids = phonemes.ids();
  for (const auto& p : phonemes.phonemes) in.silence.push_back(text::is_silence(p));
  in.speaker = job.speaker.empty() ? 0 : model.speakers().lookup(job.speaker);
  if (uses_context(model.config().variant)) {
    std::vector<std::string> window;
    for (const auto& t : job.window) window.push_back(t.empty() ? t : text::normalize_text(t));
    const auto set = context::embed_pairs(context::make_pairs(window), embedder);
    if (set.vectors.cols() != model.config().d_ctx)
      throw std::invalid_argument("embedder width " + std::to_string(set.vectors.cols()) +
                                  " differs from the model's d_ctx " + std::to_string(model.config().d_ctx));
    in.context = set.vectors;
    in.context_sentinel = set.sentinel;
  }
  return in;
}

/// Writes <out>/<name>_<k>.wav, .mel and .json per sample; returns the wav paths.
inline std::vector<fs::path> run_synthesize(RunConfig& rc, const SynthesizeArgs& a) {
  if (a.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  if (a.num_samples < 1) throw std::invalid_argument("--num-samples must be >= 1");
  const auto model = load_model<float>(a.checkpoint);
  const auto& mc = model.config();
  rc.model = mc;
  const auto jobs = synthesis_jobs(rc, a, mc);
  text::G2P g2p(rc.g2p);
  if (!a.lexicon.empty()) g2p.load_lexicon(a.lexicon);
  const auto embedder = context::make_embedder(rc.paths.embedder, mc.d_ctx, rc.paths.embedder_path);
  const fs::path out = rc.paths.out_dir;
  fs::create_directories(out);
  const auto vocoder = make_vocoder(rc.paths.vocoder_command, rc.audio, out / ".vocoder", !a.no_fallback);
  const SynthesisOptions opt{parse_sample_mode(a.mode), a.tau, a.standard_gaussian};
  std::mt19937_64 rng(a.seed);
  std::vector<fs::path> written;
  for (const auto& job : jobs) {
    const auto in = inference_input(model, g2p, *embedder, job);
    for (int k = 0; k < a.num_samples; ++k) {
      const auto res = model.synthesize(in, opt, rng);
      const auto base = out / (job.name + "_" + std::to_string(k));
      write_mel_interchange(base.string() + ".mel", res.mel, rc.audio);
      audio::write_wav(base.string() + ".wav", vocoder->vocode(res.mel));
      nlohmann::json side = {{"seed", a.seed},
                             {"sample", k},
                             {"tau", a.tau},
                             {"mode", a.mode},
                             {"variant", to_string(mc.variant)},
                             {"standard_gaussian", a.standard_gaussian},
                             {"text", job.text},
                             {"context", job.window},
                             {"checkpoint", a.checkpoint},
                             {"durations", res.durations},
                             {"vocoder", rc.paths.vocoder_command.empty() ? "griffin_lim" : rc.paths.vocoder_command}};
      std::ofstream(base.string() + ".json") << side.dump(2) << '\n';
      written.push_back(base.string() + ".wav");
    }
  }
  dump_config(out, rc, "synthesize");
  for (const auto& p : written) std::cout << p.string() << '\n';
  return written;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string config;
  std::string reference_dir;
  std::string test_dir;
  std::string report;
  std::string asr_list;
  // Prosody diversity (optional): needs a checkpoint and a manifest.
  std::string checkpoint;
  int utterances = 11;
  int num_samples = 20;
  double tau = 1.0;
  std::uint64_t seed = 1;
};

inline int run_evaluate(RunConfig& rc, const EvaluateArgs& a) {
  std::vector<std::string> ids;
  std::vector<audio::Waveform> refs, tests;
  if (!a.reference_dir.empty() || !a.test_dir.empty()) {
    if (a.reference_dir.empty() || a.test_dir.empty())
      throw std::invalid_argument("--reference-dir and --test-dir go together");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.test_dir))
      if (e.path().extension() == ".wav") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto ref = fs::path(a.reference_dir) / f.filename();
      if (!fs::exists(ref)) {
        std::cerr << "warning: no reference for " << f.filename().string() << '\n';
        continue;
      }
      ids.push_back(f.stem().string());
      refs.push_back(audio::read_wav(ref));
      tests.push_back(audio::read_wav(f));
    }
    if (!a.asr_list.empty()) {
      std::ofstream os(a.asr_list);
      for (std::size_t i = 0; i < ids.size(); ++i)
        os << ids[i] << '\t' << fs::absolute(fs::path(a.test_dir) / (ids[i] + ".wav")).string() << '\n';
    }
  }
  std::vector<std::string> warnings;
  const auto rows = eval::evaluate_pairs(ids, refs, tests, rc.audio, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

  std::optional<eval::ProsodyStats> prosody;
  if (!a.checkpoint.empty()) {
    if (rc.paths.manifest.empty()) throw std::invalid_argument("prosody evaluation needs --manifest");
    const auto model = load_model<float>(a.checkpoint);
    auto records = corpus::read_manifest(rc.paths.manifest);
    std::erase_if(records, [](const auto& r) { return r.feature_path.empty(); });
    std::mt19937_64 pick(a.seed);
    std::shuffle(records.begin(), records.end(), pick);
    if (static_cast<int>(records.size()) > a.utterances) records.resize(static_cast<std::size_t>(a.utterances));
    const auto all = corpus::read_manifest(rc.paths.manifest);
    const auto texts = corpus::text_index(all);
    text::G2P g2p(rc.g2p);
    const auto embedder = context::make_embedder(rc.paths.embedder, model.config().d_ctx, rc.paths.embedder_path);
    std::vector<UtteranceInput<float>> inputs;
    for (const auto& r : records) {
      SynthesisJob job{r.id, r.text, {}, r.speaker_id};
      if (uses_context(model.config().variant)) job.window = corpus::context_texts(r, texts);
      inputs.push_back(inference_input(model, g2p, *embedder, job));
    }
    const auto vocoder = make_vocoder(rc.paths.vocoder_command, rc.audio, fs::path(rc.paths.out_dir) / ".vocoder");
    eval::ProsodyOptions po;
    po.num_samples = a.num_samples;
    po.tau = a.tau;
    po.seed = a.seed;
    prosody = eval::prosody_std(model, *vocoder, inputs, po, rc.audio);
    std::cerr << "prosody: " << prosody->phonemes << " phonemes, " << prosody->f0_excluded
              << " excluded from the F0 std (unvoiced)\n";
  }
  if (a.report.empty()) {
    eval::write_report(std::cout, rows, prosody);
  } else {
    std::ofstream os(a.report);
    if (!os) throw std::runtime_error("cannot write report " + a.report);
    eval::write_report(os, rows, prosody);
    dump_config(fs::path(a.report).parent_path().empty() ? fs::path(".") : fs::path(a.report).parent_path(), rc,
                "evaluate");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// case-study

struct CaseStudyArgs {
  std::string config;
  std::string checkpoint;
  std::string text;
  std::vector<std::string> context_sets;  ///< each: 2L texts separated by '|'
};

inline std::vector<fs::path> run_case_study(RunConfig& rc, const CaseStudyArgs& a) {
  if (a.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  if (a.text.empty()) throw std::invalid_argument("--text is required");
  const auto model = load_model<float>(a.checkpoint);
  const auto& mc = model.config();
  rc.model = mc;
  text::G2P g2p(rc.g2p);
  const auto embedder = context::make_embedder(rc.paths.embedder, mc.d_ctx, rc.paths.embedder_path);
  std::vector<Matrix<float>> contexts;
  UtteranceInput<float> base;
  if (uses_context(mc.variant)) {
    if (a.context_sets.empty()) throw std::invalid_argument("variant cuc_vae needs at least one --context-set");
    for (const auto& set : a.context_sets) {
      std::vector<std::string> texts;
      std::stringstream ss(set);
      std::string t;
      while (std::getline(ss, t, '|')) texts.push_back(t);
      if (!set.empty() && set.back() == '|') texts.emplace_back();
      if (static_cast<int>(texts.size()) != 2 * mc.context_size)
        throw std::invalid_argument("each --context-set needs 2L = " + std::to_string(2 * mc.context_size) +
                                    " '|'-separated texts");
      SynthesizeArgs sa;
      sa.text = a.text;
      sa.context = texts;
      const auto job = synthesis_jobs(rc, sa, mc).front();
      base = inference_input(model, g2p, *embedder, job);
      contexts.push_back(base.context);
    }
  } else {
    base = inference_input(model, g2p, *embedder, {"case", a.text, {}, ""});
  }
  const fs::path out = rc.paths.out_dir;
  const auto vocoder = make_vocoder(rc.paths.vocoder_command, rc.audio, out / ".vocoder");
  auto written = eval::emit_case_study(model, *vocoder, base, contexts, out, rc.audio);
  dump_config(out, rc, "case-study");
  for (const auto& p : written) std::cout << p.string() << '\n';
  return written;
}

// ---------------------------------------------------------------------------
// Registration

/// Adds every subcommand to `app`. `exit_code` receives the command's status.
inline void register_commands(CLI::App& app, int& exit_code) {
  app.require_subcommand(1);
  auto rc = std::make_shared<RunConfig>();
  rc->paths.context_cache = default_cache_dir();

  // preprocess
  {
    auto* cmd = app.add_subcommand("preprocess", "Build the manifest and acoustic features from a corpus");
    auto args = std::make_shared<PreprocessArgs>();
    auto flags = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--config", args->config, "JSON run configuration");
    cmd->add_option("--corpus", args->corpus, "Corpus directory (metadata.jsonl or metadata.csv, wavs/)")->required();
    flags->bind("--out", rc->paths.out_dir, "Output directory for manifest.jsonl and features/");
    flags->bind("--context-size,-L", rc->model.context_size, "Neighbors L on each side of an utterance");
    cmd->add_option("--aligner-dir", args->aligner_dir, "Directory of <id>.lab forced alignments");
    cmd->add_option("--lexicon", args->lexicon, "CMUdict-format pronunciation lexicon");
    cmd->add_option("--match-threshold", args->match_threshold, "Minimum similarity for locating text in a book")
        ->capture_default_str();
    flags->bind_flag("--word-boundaries", rc->g2p.word_boundaries, "Insert sp between words (default: off)");
    flags->bind("--sample-rate", rc->audio.sample_rate, "Feature sample rate (Hz)");
    flags->bind("--seed", rc->train.seed, "Seed for --toy");
    cmd->add_option("--toy", args->toy_utterances, "First write a synthetic corpus of this many utterances")
        ->capture_default_str();
    cmd->callback([rc, args, flags, &exit_code] {
      resolve(*rc, args->config, *flags);
      exit_code = run_preprocess(*rc, *args);
    });
  }

  // embed-context
  {
    auto* cmd = app.add_subcommand("embed-context", "Embed every context window of a manifest into the cache");
    auto config = std::make_shared<std::string>();
    auto pairs_out = std::make_shared<std::string>();
    auto flags = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--config", *config, "JSON run configuration");
    flags->bind("--manifest", rc->paths.manifest, "Manifest written by preprocess");
    cmd->add_option("--list-pairs", *pairs_out, "Only write the distinct rendered pairs to this file, one per line");
    flags->bind("--cache-dir", rc->paths.context_cache, std::string("Context cache directory (env ") + kCacheEnv + ")");
    flags->bind("--embedder", rc->paths.embedder, "Pair embedder: hash or precomputed")
        ->check(CLI::IsMember({"hash", "precomputed"}));
    flags->bind("--embedder-path", rc->paths.embedder_path, "JSONL of precomputed pair embeddings");
    flags->bind("--dim", rc->model.d_ctx, "Embedding width d_ctx");
    cmd->callback([rc, config, pairs_out, flags, &exit_code] {
      resolve(*rc, *config, *flags);
      exit_code = run_embed_context(*rc, *pairs_out);
    });
  }

  // train
  {
    auto* cmd = app.add_subcommand("train", "Train a model variant");
    auto args = std::make_shared<TrainArgs>();
    auto flags = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--config", args->config, "JSON run configuration");
    flags->bind("--manifest", rc->paths.manifest, "Manifest written by preprocess");
    flags->bind("--context-cache", rc->paths.context_cache, std::string("Context cache directory (env ") + kCacheEnv + ")");
    flags->bind("--out", rc->paths.out_dir, "Output directory for checkpoints and logs");
    flags->bind_variant("--variant", rc->model.variant, "baseline, global_vae, fine_grained_vae, cvae or cuc_vae");
    auto* L = flags->bind("--context-size,-L", rc->model.context_size, "Neighbors L on each side (cuc_vae)");
    flags->bind("--steps", rc->train.steps, "Optimizer steps");
    flags->bind("--seed", rc->train.seed, "Seed for initialization, batching and sampling");
    flags->bind("--frame-budget", rc->train.frame_budget, "Maximum mel frames per batch");
    flags->bind("--lr", rc->train.optim.peak_lr, "Peak learning rate");
    flags->bind("--warmup", rc->train.optim.warmup_steps, "Learning-rate warmup steps");
    flags->bind("--grad-clip", rc->train.optim.grad_clip, "Global gradient-norm clip (0 disables)");
    flags->bind("--beta1", rc->train.beta1_max, "Final weight of KL(posterior || prior)");
    flags->bind("--beta2", rc->train.beta2_max, "Final weight of KL(prior || N(0, I))");
    flags->bind("--kl-warmup", rc->train.kl_warmup_steps, "Steps of linear KL annealing");
    flags->bind("--checkpoint-every", rc->train.checkpoint_every, "Steps between checkpoints");
    flags->bind("--d-model", rc->model.d_model, "Model width");
    flags->bind("--encoder-layers", rc->model.encoder_layers, "Encoder layers");
    flags->bind("--decoder-layers", rc->model.decoder_layers, "Decoder layers");
    flags->bind("--ff", rc->model.encoder_ff, "Encoder feed-forward width");
    flags->bind("--decoder-ff", rc->model.decoder_ff, "Decoder feed-forward width");
    flags->bind("--d-attn", rc->model.d_attn, "Context attention width");
    flags->bind("--d-ctx", rc->model.d_ctx, "Context embedding width");
    flags->bind("--d-z", rc->model.d_z, "Latent dimensions per phoneme");
    flags->bind("--vae-hidden", rc->model.vae_hidden, "Prior/posterior hidden width");
    flags->bind("--dropout", rc->model.dropout, "Dropout probability");
    flags->bind_flag("--mask-sentinel-pairs", rc->model.mask_sentinel_pairs,
                     "Mask context pairs that touch a document boundary (default: off)");
    cmd->add_option("--resume", args->resume, "Checkpoint to resume from");
    cmd->callback([rc, args, flags, L, &exit_code] {
      resolve(*rc, args->config, *flags);
      run_train(*rc, *args, L->count() > 0);
      exit_code = 0;
    });
  }

  // synthesize
  {
    auto* cmd = app.add_subcommand("synthesize", "Synthesize speech from a checkpoint");
    auto args = std::make_shared<SynthesizeArgs>();
    auto flags = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--config", args->config, "JSON run configuration");
    cmd->add_option("--checkpoint", args->checkpoint, "Model checkpoint")->required();
    cmd->add_option("--text", args->text, "Sentence to synthesize");
    cmd->add_option("--context", args->context,
                    "Neighbor sentence, repeated 2L times: L preceding then L following (\"\" = boundary)");
    flags->bind("--manifest", rc->paths.manifest, "Manifest to take sentences and contexts from (with --ids)");
    cmd->add_option("--ids", args->manifest_ids, "Comma-separated manifest ids to synthesize");
    cmd->add_option("--speaker", args->speaker, "Speaker id (default: first speaker)");
    cmd->add_option("--lexicon", args->lexicon, "CMUdict-format pronunciation lexicon");
    cmd->add_option("--mode", args->mode, "Latent mode: sample or mean")
        ->capture_default_str()
        ->check(CLI::IsMember({"sample", "mean"}));
    cmd->add_option("--tau", args->tau, "Sampling temperature")->capture_default_str();
    cmd->add_option("--num-samples", args->num_samples, "Samples per sentence")->capture_default_str();
    cmd->add_option("--seed", args->seed, "Sampling seed")->capture_default_str();
    cmd->add_flag("--standard-gaussian", args->standard_gaussian, "Sample latents from N(0, I) instead of the prior (default: off)");
    cmd->add_option("--name", args->name, "Output file stem for --text")->capture_default_str();
    flags->bind("--out", rc->paths.out_dir, "Output directory");
    flags->bind("--embedder", rc->paths.embedder, "Pair embedder: hash or precomputed")
        ->check(CLI::IsMember({"hash", "precomputed"}));
    flags->bind("--embedder-path", rc->paths.embedder_path, "JSONL of precomputed pair embeddings");
    flags->bind("--vocoder-command", rc->paths.vocoder_command, "External vocoder: <command> <mel> <wav>");
    cmd->add_flag("--no-fallback", args->no_fallback, "Fail instead of using Griffin-Lim without a vocoder (default: off)");
    cmd->callback([rc, args, flags, &exit_code] {
      resolve(*rc, args->config, *flags);
      run_synthesize(*rc, *args);
      exit_code = 0;
    });
  }

  // evaluate
  {
    auto* cmd = app.add_subcommand("evaluate", "Objective metrics: FFE, MCD and prosody diversity");
    auto args = std::make_shared<EvaluateArgs>();
    auto flags = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--config", args->config, "JSON run configuration");
    cmd->add_option("--reference-dir", args->reference_dir, "Directory of reference <id>.wav");
    cmd->add_option("--test-dir", args->test_dir, "Directory of synthesized <id>.wav");
    cmd->add_option("--report", args->report, "Report path (default: stdout)");
    cmd->add_option("--asr-list", args->asr_list, "Write an id/path list for an external recognizer");
    cmd->add_option("--checkpoint", args->checkpoint, "Checkpoint for the prosody diversity measurement");
    flags->bind("--manifest", rc->paths.manifest, "Manifest to draw utterances from");
    cmd->add_option("--utterances", args->utterances, "Utterances for prosody diversity")->capture_default_str();
    cmd->add_option("--num-samples", args->num_samples, "Samples per utterance")->capture_default_str();
    cmd->add_option("--tau", args->tau, "Sampling temperature")->capture_default_str();
    cmd->add_option("--seed", args->seed, "Seed for utterance choice and sampling")->capture_default_str();
    flags->bind("--embedder", rc->paths.embedder, "Pair embedder: hash or precomputed")
        ->check(CLI::IsMember({"hash", "precomputed"}));
    flags->bind("--embedder-path", rc->paths.embedder_path, "JSONL of precomputed pair embeddings");
    flags->bind("--vocoder-command", rc->paths.vocoder_command, "External vocoder: <command> <mel> <wav>");
    cmd->callback([rc, args, flags, &exit_code] {
      resolve(*rc, args->config, *flags);
      exit_code = run_evaluate(*rc, *args);
    });
  }

  // case-study
  {
    auto* cmd = app.add_subcommand("case-study", "Export energy and F0 contours of one sentence under several contexts");
    auto args = std::make_shared<CaseStudyArgs>();
    auto flags = std::make_shared<FlagBinder>(cmd);
    cmd->add_option("--config", args->config, "JSON run configuration");
    cmd->add_option("--checkpoint", args->checkpoint, "Model checkpoint")->required();
    cmd->add_option("--text", args->text, "Sentence to synthesize")->required();
    cmd->add_option("--context-set", args->context_sets, "2L neighbor sentences separated by '|', repeatable");
    flags->bind("--out", rc->paths.out_dir, "Output directory for context_<k>.tsv");
    flags->bind("--embedder", rc->paths.embedder, "Pair embedder: hash or precomputed")
        ->check(CLI::IsMember({"hash", "precomputed"}));
    flags->bind("--embedder-path", rc->paths.embedder_path, "JSONL of precomputed pair embeddings");
    flags->bind("--vocoder-command", rc->paths.vocoder_command, "External vocoder: <command> <mel> <wav>");
    cmd->callback([rc, args, flags, &exit_code] {
      resolve(*rc, args->config, *flags);
      run_case_study(*rc, *args);
      exit_code = 0;
    });
  }
}

}  // namespace cuctts::cli

#endif  // CUCTTS_COMMANDS_HPP_
