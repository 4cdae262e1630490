#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bf/container.hpp"
#include "bf/error.hpp"
#include "bf/experiment.hpp"
#include "bf/registry.hpp"
#include "bf/server.hpp"
#include "bf/snapshot.hpp"
#include "bf/version.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kDomainFailure = 1;
constexpr int kUsageError = 2;

bf::mainloop::MainLoop* g_loop = nullptr;

extern "C" void on_sigint(int) {
  if (g_loop) g_loop->request_interrupt();
}

fs::path default_data_dir() {
  const char* env = std::getenv("BF_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw bf::IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw bf::FormatError(path.string() + ": " + e.what());
  }
}

std::string join_argv(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

int cmd_download(const std::string& name, const fs::path& dir) {
  auto result = bf::datasets::download(bf::datasets::Registry::builtin(), name, dir);
  for (const auto& f : result.fetched) std::cout << "fetched " << f << "\n";
  for (const auto& f : result.skipped) std::cout << "up to date " << f << "\n";
  return 0;
}

int cmd_convert(const std::string& name, const fs::path& raw, const fs::path& out,
                const std::string& command_line) {
  bf::datasets::convert(bf::datasets::Registry::builtin(), name, raw, out, command_line);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_validate(const fs::path& file) {
  auto report = bf::container::validate(file);
  std::cout << report.to_text();
  return report.passed() ? 0 : kDomainFailure;
}

int cmd_serve(const fs::path& spec_path, std::uint16_t port) {
  nlohmann::json spec = read_json(spec_path);
  if (spec.contains("container")) {
    fs::path c = spec.at("container").get<std::string>();
    if (c.is_relative()) spec["container"] = (spec_path.parent_path() / c).string();
  }
  auto server = bf::server::spawn(spec, port);
  std::cout << "listening on 127.0.0.1:" << server.port() << std::endl;
  const int status = server.wait();
  return status == 0 ? 0 : kDomainFailure;
}

int cmd_train(const fs::path& spec_path, const std::string& resume) {
  auto spec = read_json(spec_path);
  auto ex = bf::experiment::Experiment::build(spec, spec_path.parent_path());
  auto& loop = ex->loop();
  if (!resume.empty()) loop.resume_from(resume);
  g_loop = &loop;
  std::signal(SIGINT, on_sigint);
  loop.run();
  std::signal(SIGINT, SIG_DFL);
  g_loop = nullptr;
  const auto& st = loop.status();
  std::cout << "iterations_done: " << st.iterations_done << "\n"
            << "epochs_done: " << st.epochs_done << "\n";
  if (auto c = loop.log().find(st.iterations_done, "train_cost")) std::cout << "train_cost: " << *c << "\n";
  std::cout << "train_accuracy: " << ex->accuracy(spec.at("train_split").get<std::string>()) << "\n";
  if (st.interrupted) {
    std::cout << "interrupted\n";
    return kDomainFailure;
  }
  return 0;
}

int cmd_inspect(const fs::path& file) {
  auto s = bf::mainloop::read_snapshot(file);
  std::cout << "format_version: " << s.format_version << "\n"
            << "iterations_done: " << s.status.iterations_done << "\n"
            << "epochs_done: " << s.status.epochs_done << "\n"
            << "training_finished: " << (s.status.training_finished ? "true" : "false") << "\n"
            << "stop_requested: " << (s.status.stop_requested ? "true" : "false") << "\n"
            << "log_rows: " << s.log.size() << "\n"
            << "channels:";
  for (const auto& c : s.log.channel_names()) std::cout << " " << c;
  std::cout << "\nparameters:";
  for (const auto& [path, a] : s.parameters) std::cout << " " << path << bf::shape_to_string(a.shape());
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dataset, pipeline and training toolkit", std::string(bf::kToolName)};
  app.set_version_flag("--version", std::string(bf::kVersion));
  app.require_subcommand(1);

  std::string name, raw, out, file, spec, resume;
  fs::path dir = default_data_dir();
  std::uint16_t port = 0;

  auto* download = app.add_subcommand("download", "Fetch or generate the raw files of a dataset");
  download->add_option("name", name, "Dataset name")->required();
  download->add_option("--dir", dir, "Destination directory (default: $BF_DATA_DIR or .)");

  auto* convert = app.add_subcommand("convert", "Convert raw files into a container");
  convert->add_option("name", name, "Dataset name")->required();
  convert->add_option("--raw", raw, "Directory holding the raw files")->required();
  convert->add_option("--out", out, "Output container path")->required();

  auto* info = app.add_subcommand("info", "Describe a container");
  info->add_option("file", file, "Container path")->required();

  auto* validate = app.add_subcommand("validate", "Check a container's integrity");
  validate->add_option("file", file, "Container path")->required();

  auto* serve = app.add_subcommand("serve", "Serve a pipeline over TCP to one client");
  serve->add_option("--spec", spec, "Pipeline JSON")->required();
  serve->add_option("--port", port, "Port (0 picks a free one)");

  auto* train = app.add_subcommand("train", "Train the demo model");
  train->add_option("--spec", spec, "Training JSON")->required();
  train->add_option("--resume", resume, "Snapshot to resume from");

  auto* inspect = app.add_subcommand("inspect-snapshot", "Summarize a training snapshot");
  inspect->add_option("file", file, "Snapshot path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsageError;
  }

  try {
    if (*download) return cmd_download(name, dir);
    if (*convert) return cmd_convert(name, raw, out, join_argv(argc, argv));
    if (*info) {
      std::cout << bf::container::info(file);
      return 0;
    }
    if (*validate) return cmd_validate(file);
    if (*serve) return cmd_serve(spec, port);
    if (*train) return cmd_train(spec, resume);
    if (*inspect) return cmd_inspect(file);
  } catch (const std::exception& e) {
    std::cerr << "bf: " << e.what() << "\n";
    return kDomainFailure;
  }
  return kUsageError;
}
