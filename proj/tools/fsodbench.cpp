// Copyright 2026 The fsodbench Authors. All Rights Reserved.
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

// fsodbench: split construction, support crops, experiment runs, evaluation
// and result tables.
//
// Exit codes: 0 ok, 1 validation, 2 backend exhaustion, 3 IO.

#include <glob.h>

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "fsod/backends.hpp"
#include "fsod/dataset.hpp"
#include "fsod/errors.hpp"
#include "fsod/experiment_config.hpp"
#include "fsod/metrics.hpp"
#include "fsod/report.hpp"
#include "fsod/runner.hpp"
#include "fsod/split_file.hpp"
#include "fsod/split_optimizer.hpp"
#include "fsod/support.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fsod;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitBackend = 2;
constexpr int kExitIo = 3;

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  detail::write_text(path, text);
}

DatasetIndex load_index_arg(const std::string& path, const std::string& format) {
  return format.empty() ? load_index(path) : load_index(path, parse_index_format(format));
}

// --- split ------------------------------------------------------------------

struct SplitArgs {
  std::string index, format, out;
  std::vector<std::string> sources;
  SplitConstraints cons;
  SeedSearchConfig search;
  bool exact = false;
};

int cmd_split(const SplitArgs& a) {
  const DatasetIndex idx = load_index_arg(a.index, a.format);
  const auto sources = a.sources.empty() ? idx.sources() : a.sources;
  SplitFile file;
  for (const auto& src : sources) {
    const SplitInstance inst = make_split_instance(idx, src);
    const SplitAssignment best = a.exact ? solve_exact(inst, a.cons) : solve(inst, a.cons, a.search);
    file.add(inst, a.cons, a.search, best);
    std::cerr << src << ": SSS " << best.score.sss << " (CPC " << best.score.cpc << ", CBE "
              << best.score.cbe << "), coverage " << best.objectives.coverage << ", trial "
              << best.trial << "\n";
  }
  if (sources.size() > 1) std::cerr << "mean SSS " << file.mean_sss() << "\n";
  write_output(a.out, file.to_jsonl());
  return kExitOk;
}

// --- crops ------------------------------------------------------------------

struct CropsArgs {
  std::string index, format, split, source, image_root, out_dir;
  int k = 1;
  std::uint64_t seed = 0;
  double margin = kDefaultCropMargin;
};

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

int cmd_crops(const CropsArgs& a) {
  DatasetIndex idx = load_index_arg(a.index, a.format);
  if (!a.source.empty()) {
    idx = idx.subset(a.source);
  } else if (idx.sources().size() > 1) {
    throw ValidationError("index has several sources; pass --source");
  }
  const SplitFile split = SplitFile::load(a.split);
  const SupportSet s = build_support(idx, split, a.k, a.seed, a.margin);
  const std::string root =
      a.image_root.empty() ? fs::path(a.index).parent_path().string() : a.image_root;
  nlohmann::json manifest{{"k", a.k}, {"seed", a.seed}, {"margin", a.margin},
                          {"crops", nlohmann::json::array()}, {"shortfall", s.shortfall}};
  for (const auto& [label, crops] : s.per_class) {
    for (std::size_t i = 0; i < crops.size(); ++i) {
      const auto& c = crops[i];
      const fs::path rel = fs::path(slug(label)) /
                           (std::to_string(c.image_id) + "_" + std::to_string(i) + ".png");
      const fs::path dst = fs::path(a.out_dir) / rel;
      fs::create_directories(dst.parent_path());
      write_file_bytes(dst.string(), extract_crop(idx.record(c.image_id), root, c.box, a.margin));
      manifest["crops"].push_back(
          {{"file", rel.generic_string()}, {"label", label}, {"image_id", c.image_id},
           {"bbox", {c.box.x_min, c.box.y_min, c.box.x_max, c.box.y_max}},
           {"region", {c.region.x_min, c.region.y_min, c.region.x_max, c.region.y_max}}});
    }
  }
  write_output((fs::path(a.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  for (const auto& [label, missing] : s.shortfall) {
    std::cerr << "warning: class '" << label << "' has " << missing
              << " fewer example boxes than K\n";
  }
  std::cerr << s.size() << " crops written to " << a.out_dir << "\n";
  return kExitOk;
}

// --- run --------------------------------------------------------------------

struct RunArgs {
  std::string config, out, log;
  bool fresh = false;
};

int cmd_run(const RunArgs& a) {
  const ExperimentConfig cfg = load_experiment_config(a.config);
  RunOptions opt;
  opt.output = a.out.empty() ? (fs::path("runs") / (fs::path(a.config).stem().string() + ".jsonl")).string()
                             : a.out;
  opt.resume = !a.fresh;
  if (fs::path(opt.output).has_parent_path()) {
    fs::create_directories(fs::path(opt.output).parent_path());
  }
  RunLog log(a.log.empty() ? opt.output + ".log" : a.log);
  opt.log = &log;
  const RunResult r = run_experiment(cfg, opt);
  const std::size_t failed = r.record.count(ImageStatus::kFailed);
  std::cerr << opt.output << ": " << r.processed << " images run, " << r.resumed
            << " resumed, " << r.record.count(ImageStatus::kOk) << " ok, " << failed
            << " failed, " << r.record.count(ImageStatus::kSkipped) << " skipped\n";
  if (failed > 0) {
    std::cerr << "some images failed after retries; rerun to retry them\n";
    return kExitBackend;
  }
  return kExitOk;
}

// --- evaluate ---------------------------------------------------------------

struct EvalArgs {
  std::string run, out, invalid = "fp";
};

MetricConfig metric_config(const std::string& invalid) {
  MetricConfig cfg;
  if (invalid == "drop") {
    cfg.drop_invalid_labels = true;
  } else if (invalid != "fp") {
    throw ValidationError("--invalid-labels must be fp or drop");
  }
  return cfg;
}

int cmd_evaluate(const EvalArgs& a) {
  const Evaluation e = evaluate_run(load_run(a.run), metric_config(a.invalid));
  write_output(a.out, evaluation_text(e));
  return kExitOk;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out, format = "text", variant = "excluded", invalid = "fp";
};

std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
  std::vector<std::string> out;
  for (const auto& p : patterns) {
    glob_t g{};
    const int rc = ::glob(p.c_str(), 0, nullptr, &g);
    if (rc == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    ::globfree(&g);
    if (rc == GLOB_NOMATCH) throw IoError("no run files match '" + p + "'");
    if (rc != 0 && rc != GLOB_NOMATCH) throw IoError("cannot expand '" + p + "'");
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int cmd_report(const ReportArgs& a) {
  if (a.variant != "excluded" && a.variant != "empty") {
    throw ValidationError("--variant must be excluded or empty");
  }
  const MetricConfig cfg = metric_config(a.invalid);
  std::vector<MetricReport> reports;
  for (const auto& path : expand_globs(a.runs)) {
    if (path.size() > 4 && path.compare(path.size() - 4, 4, ".log") == 0) continue;
    const Evaluation e = evaluate_run(load_run(path), cfg);
    reports.push_back(a.variant == "excluded" ? e.excluded : e.counted_as_empty);
  }
  const auto sheets = build_report(reports);
  if (a.format == "text") {
    write_output(a.out, render_text(sheets));
  } else if (a.format == "csv") {
    write_output(a.out, render_csv(sheets));
  } else {
    throw ValidationError("--format must be text or csv");
  }
  return kExitOk;
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir, preset = "default";
  std::uint64_t seed = 2026;
};

// Default corpus: 63 images with one common, one mid and one rare class.
SynthSpec synth_preset(const SynthArgs& a) {
  SynthSpec spec;
  spec.seed = a.seed;
  spec.num_images = 63;
  spec.cell = 24;
  if (a.preset == "default") {
    spec.source = "synthetic";
    spec.classes = {{"Round Cells", 250, 0}, {"Spindle Cells", 120, 30}, {"Polygonal Cells", 40, 12}};
  } else {
    throw ValidationError("unknown preset '" + a.preset + "'");
  }
  return spec;
}

int cmd_synth(const SynthArgs& a) {
  const SynthCorpus c = synth_fixture(synth_preset(a));
  write_corpus(c, a.out_dir);
  std::cerr << c.index.images().size() << " images, " << c.index.annotations().size()
            << " boxes written to " << a.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot detection benchmark toolkit"};
  app.require_subcommand(1);

  SplitArgs split;
  auto* s = app.add_subcommand("split", "Build example/test splits from an annotation index");
  s->add_option("--index", split.index, "COCO JSON or CSV index")->required();
  s->add_option("--format", split.format, "coco or csv (default: by extension)");
  s->add_option("--source", split.sources, "Source tag(s) to split (default: all)");
  s->add_option("--out", split.out, "Split file (default: stdout)");
  s->add_option("--trials", split.search.trials, "Seed trials")->capture_default_str();
  s->add_option("--seed", split.search.base_seed, "Base seed")->capture_default_str();
  s->add_option("--m-exp", split.cons.m_exp, "Min boxes per class in example")->capture_default_str();
  s->add_option("--m-test", split.cons.m_test, "Min boxes per class in test")->capture_default_str();
  s->add_option("--n-exp", split.cons.n_exp, "Example images")->capture_default_str();
  s->add_option("--n-test", split.cons.n_test, "Test images")->capture_default_str();
  s->add_flag("--exact", split.exact, "Exhaustive solver (at most 16 images)");

  CropsArgs crops;
  auto* c = app.add_subcommand("crops", "Write K-shot support crops from the example split");
  c->add_option("--index", crops.index, "Annotation index")->required();
  c->add_option("--format", crops.format, "coco or csv");
  c->add_option("--split", crops.split, "Split file")->required();
  c->add_option("--source", crops.source, "Source tag");
  c->add_option("--image-root", crops.image_root, "Image directory (default: index dir)");
  c->add_option("--k", crops.k, "Shots per class (1, 3 or 6)")->required();
  c->add_option("--seed", crops.seed, "Sampling seed")->capture_default_str();
  c->add_option("--margin", crops.margin, "Crop margin fraction")->capture_default_str();
  c->add_option("--out-dir", crops.out_dir, "Output directory")->required();

  RunArgs run;
  auto* r = app.add_subcommand("run", "Execute or resume an experiment");
  r->add_option("--config", run.config, "Experiment config JSON")->required();
  r->add_option("--out", run.out, "Run file (default: runs/<config>.jsonl)");
  r->add_option("--log", run.log, "Event log (default: <run file>.log)");
  r->add_flag("--fresh", run.fresh, "Discard an existing run file instead of resuming");

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a run file");
  e->add_option("--run", ev.run, "Run file")->required();
  e->add_option("--out", ev.out, "Report JSON (default: stdout)");
  e->add_option("--invalid-labels", ev.invalid, "fp or drop")->capture_default_str();

  ReportArgs rep;
  auto* p = app.add_subcommand("report", "Tabulate runs as method x K grids");
  p->add_option("--runs", rep.runs, "Run file glob(s)")->required();
  p->add_option("--out", rep.out, "Output file (default: stdout)");
  p->add_option("--format", rep.format, "text or csv")->capture_default_str();
  p->add_option("--variant", rep.variant, "excluded or empty (failed images)")->capture_default_str();
  p->add_option("--invalid-labels", rep.invalid, "fp or drop")->capture_default_str();

  SynthArgs syn;
  auto* y = app.add_subcommand("synth", "Write a synthetic corpus (PNG + COCO index)");
  y->add_option("--out-dir", syn.out_dir, "Output directory")->required();
  y->add_option("--preset", syn.preset, "Corpus preset")->capture_default_str();
  y->add_option("--seed", syn.seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitValidation;
  }

  try {
    if (*s) return cmd_split(split);
    if (*c) return cmd_crops(crops);
    if (*r) return cmd_run(run);
    if (*e) return cmd_evaluate(ev);
    if (*p) return cmd_report(rep);
    if (*y) return cmd_synth(syn);
  } catch (const ValidationError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitValidation;
  } catch (const BackendError& ex) {
    std::cerr << "backend error: " << ex.what() << "\n";
    return kExitBackend;
  } catch (const IoError& ex) {
    std::cerr << "io error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& ex) {
    std::cerr << "io error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
