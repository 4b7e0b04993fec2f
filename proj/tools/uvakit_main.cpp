// Command-line front end. Everything goes through the C interface.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "uvakit/uvakit.h"

namespace {

constexpr int kUsageExit = 2;

// Status codes map onto exit codes 3..10.
int exit_code(uva_status s) { return s == UVA_OK ? 0 : 2 + static_cast<int>(s); }

int report_failure(uva_status s) {
  std::cerr << "uvakit: " << uva_status_name(s) << ": " << uva_last_error() << "\n";
  return exit_code(s);
}

std::string take(char* s) {
  std::string out = s ? s : "";
  uva_string_free(s);
  return out;
}

void log_line(const char* line, void*) { std::cerr << line << "\n"; }

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (static_cast<unsigned char>(c) < 0x20) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "\\u%04x", c);
      out += buf;
    } else {
      out += c;
    }
  }
  return out + "\"";
}

struct PipelineFlags {
  std::string config;
  std::string out;
  std::string seed;
  std::string threshold;
  bool force = false;
  bool resume = false;
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f, bool with_resume) {
  cmd->add_option("-c,--config", f.config, "Experiment config (JSON)");
  cmd->add_option("-o,--out", f.out, "Run directory (overrides out_dir)");
  cmd->add_option("-s,--seed", f.seed, "Global seed (overrides seed)");
  cmd->add_option("-t,--threshold", f.threshold, "Decision threshold (overrides eval.threshold)");
  cmd->add_flag("-f,--force", f.force, "Overwrite existing outputs");
  if (with_resume) cmd->add_flag("--resume", f.resume, "Continue training from the run's checkpoint");
}

int run_pipeline(const std::string& command, const PipelineFlags& f) {
  uva_experiment* exp = nullptr;
  uva_status s = uva_experiment_load(f.config.empty() ? nullptr : f.config.c_str(), &exp);
  if (s != UVA_OK) return report_failure(s);
  struct Guard {
    uva_experiment* e;
    ~Guard() { uva_experiment_free(e); }
  } guard{exp};
  if (!f.out.empty() && (s = uva_experiment_set(exp, "out_dir", json_string(f.out).c_str())) != UVA_OK)
    return report_failure(s);
  if (!f.seed.empty() && (s = uva_experiment_set(exp, "seed", f.seed.c_str())) != UVA_OK) return report_failure(s);
  if (!f.threshold.empty() && (s = uva_experiment_set(exp, "eval.threshold", f.threshold.c_str())) != UVA_OK)
    return report_failure(s);
  unsigned flags = (f.force ? UVA_RUN_FORCE : 0u) | (f.resume ? UVA_RUN_RESUME : 0u);
  char* summary = nullptr;
  s = uva_experiment_run(exp, command.c_str(), flags, log_line, nullptr, &summary);
  if (s != UVA_OK) return report_failure(s);
  std::string text = take(summary);
  std::cout << text << (text.empty() || text.back() == '\n' ? "" : "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vocabulary alignment toolkit: pair generation, Siamese training, cross-encoder scoring"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(uva_version()));

  const std::vector<std::pair<std::string, std::string>> pipeline = {
      {"ingest", "Validate the atom file and summarize it"},
      {"gen-pairs", "Generate labeled pairs and the train/test split"},
      {"extract", "Build the embedding table (static, contextual or random)"},
      {"train", "Train the Siamese model"},
      {"eval", "Score the test pairs with the trained model"},
      {"cross-eval", "Score the test pairs with cross-encoders in both orders"},
      {"run", "ingest, gen-pairs, extract, train, eval (and cross-eval when configured)"},
  };
  std::vector<PipelineFlags> pflags(pipeline.size());
  std::vector<CLI::App*> pcmds;
  for (std::size_t i = 0; i < pipeline.size(); ++i) {
    auto* cmd = app.add_subcommand(pipeline[i].first, pipeline[i].second);
    add_pipeline_flags(cmd, pflags[i], pipeline[i].first == "train" || pipeline[i].first == "run");
    pcmds.push_back(cmd);
  }

  std::vector<std::string> report_dirs;
  std::string report_format = "markdown", report_output;
  auto* report = app.add_subcommand("report", "Merge the metrics of several runs into one table");
  report->add_option("runs", report_dirs, "Run directories")->required();
  report->add_option("--format", report_format, "markdown or csv")->check(CLI::IsMember({"markdown", "md", "csv"}));
  report->add_option("--output", report_output, "Write the table here instead of stdout");

  std::string replay_dir, replay_out;
  bool replay_force = false;
  auto* replay = app.add_subcommand("replay", "Re-run a run's manifest and compare outputs byte for byte");
  replay->add_option("run_dir", replay_dir, "Recorded run directory")->required();
  replay->add_option("-o,--out", replay_out, "Directory for the replayed run")->required();
  replay->add_flag("-f,--force", replay_force, "Allow a non-empty target directory");

  std::string synth_out;
  std::uint64_t synth_seed = 20200;
  std::size_t synth_concepts = 200;
  bool synth_force = false;
  auto* synth = app.add_subcommand("synth", "Write the synthetic toy terminology");
  synth->add_option("-o,--out", synth_out, "Atom file to write")->required();
  synth->add_option("-s,--seed", synth_seed, "Generator seed");
  synth->add_option("--concepts", synth_concepts, "Number of concepts");
  synth->add_flag("-f,--force", synth_force, "Overwrite an existing file");

  auto* schema = app.add_subcommand("schema", "Print the config schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageExit;
  }

  for (std::size_t i = 0; i < pcmds.size(); ++i)
    if (pcmds[i]->parsed()) return run_pipeline(pipeline[i].first, pflags[i]);

  if (report->parsed()) {
    std::vector<const char*> dirs;
    for (const auto& d : report_dirs) dirs.push_back(d.c_str());
    char* out = nullptr;
    const uva_status s =
        uva_report(dirs.data(), dirs.size(), report_format == "csv" ? UVA_STYLE_CSV : UVA_STYLE_MARKDOWN, &out);
    if (s != UVA_OK) return report_failure(s);
    const std::string table = take(out);
    if (report_output.empty()) {
      std::cout << table;
    } else {
      FILE* f = std::fopen(report_output.c_str(), "wb");
      if (!f || std::fwrite(table.data(), 1, table.size(), f) != table.size()) {
        if (f) std::fclose(f);
        std::cerr << "uvakit: cannot write " << report_output << "\n";
        return exit_code(UVA_E_IO);
      }
      std::fclose(f);
    }
    return 0;
  }

  if (replay->parsed()) {
    char* log = nullptr;
    std::size_t mismatches = 0;
    const uva_status s = uva_replay(replay_dir.c_str(), replay_out.c_str(), replay_force ? UVA_RUN_FORCE : 0u,
                                    log_line, nullptr, &log, &mismatches);
    if (s != UVA_OK) return report_failure(s);
    std::cout << take(log);
    if (mismatches) {
      std::cerr << "uvakit: " << mismatches << " output(s) differ from the recorded run\n";
      return exit_code(UVA_E_HASH_MISMATCH);
    }
    std::cout << "replay reproduced every recorded output\n";
    return 0;
  }

  if (synth->parsed()) {
    const uva_status s = uva_synth_corpus(synth_out.c_str(), synth_seed, synth_concepts, synth_force ? 1 : 0);
    if (s != UVA_OK) return report_failure(s);
    std::cout << "wrote " << synth_out << "\n";
    return 0;
  }

  if (schema->parsed()) {
    char* out = nullptr;
    const uva_status s = uva_config_schema(&out);
    if (s != UVA_OK) return report_failure(s);
    std::cout << take(out);
    return 0;
  }
  return kUsageExit;
}
