#include <boost/asio/io_context.hpp>
#include <boost/asio/signal_set.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "flowguard/library.hpp"
#include "flowguard/proxy.hpp"

using namespace flowguard;

namespace {

// Exit codes: 0 success, 1 validation/scenario/startup failure, 2 usage.
constexpr int kFail = 1;
constexpr int kUsage = 2;

spec::ProtocolSpec load_spec(const std::string& arg) {
  if (!std::filesystem::exists(arg) && library::has_builtin_spec(arg)) return library::builtin_spec(arg);
  return spec::parse_spec_file(arg);
}

int cmd_validate(const std::vector<std::string>& files) {
  bool failed = false;
  for (const auto& f : files) {
    spec::ProtocolSpec s;
    try {
      s = load_spec(f);
    } catch (const std::exception& e) {
      std::cout << f << ": error: " << e.what() << "\n";
      failed = true;
      continue;
    }
    const auto diags = spec::validate_spec(s);
    for (const auto& d : diags) std::cout << f << ": " << d.to_string() << "\n";
    if (spec::has_errors(diags)) {
      failed = true;
    } else {
      std::cout << f << ": ok (" << s.name << ", " << spec::flow_messages(s).size() << " messages)\n";
    }
  }
  return failed ? kFail : 0;
}

int cmd_graph(const std::vector<std::string>& files, const std::string& out) {
  std::vector<spec::ProtocolSpec> specs;
  try {
    for (const auto& f : files) specs.push_back(load_spec(f));
    const std::string dot = automaton::to_dot(automaton::compose(specs));
    if (out.empty() || out == "-") {
      std::cout << dot;
    } else {
      std::ofstream o(out);
      if (!(o << dot)) {
        std::cerr << "flowguard: cannot write " << out << "\n";
        return kFail;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "flowguard: " << e.what() << "\n";
    return kFail;
  }
  return 0;
}

int cmd_replay(const std::vector<std::string>& args, bool builtin, std::uint64_t seed) {
  std::vector<library::Scenario> scenarios;
  try {
    if (builtin) {
      if (args.empty()) {
        scenarios = library::builtin_scenarios();
      } else {
        for (const auto& name : args) {
          bool found = false;
          for (auto& sc : library::builtin_scenarios()) {
            if (sc.name == name || sc.group == name) {
              scenarios.push_back(sc);
              found = true;
            }
          }
          if (!found) throw library::ScenarioError("no builtin scenario or group named '" + name + "'");
        }
      }
    } else {
      for (const auto& f : args) scenarios.push_back(library::load_scenario_file(f));
    }
  } catch (const std::exception& e) {
    std::cerr << "flowguard: " << e.what() << "\n";
    return kFail;
  }

  std::vector<library::ScenarioReport> reports;
  library::RunOptions opts;
  opts.seed = seed;
  for (const auto& sc : scenarios) {
    try {
      reports.push_back(library::run_scenario(sc, opts));
    } catch (const std::exception& e) {
      library::ScenarioReport r;
      r.name = sc.name;
      r.group = sc.group;
      r.outcome = sc.outcome;
      r.specs = sc.specs;
      r.failure = e.what();
      reports.push_back(std::move(r));
    }
  }
  std::cout << library::render_reports(reports);
  for (const auto& r : reports) {
    if (!r.passed) return kFail;
  }
  return 0;
}

int cmd_serve(const std::string& config_path) {
  std::unique_ptr<proxy::Server> server;
  std::uint16_t port = 0;
  try {
    auto config = proxy::load_config(config_path);
    server = std::make_unique<proxy::Server>(config);
    port = server->start();
    std::cerr << "flowguard: listening on " << config.listen_address << ":" << port << " (" << config.specs.size()
              << " specs, keying " << proxy::to_string(config.keying) << ", tls " << proxy::to_string(config.tls)
              << ")\n";
  } catch (const std::exception& e) {
    std::cerr << "flowguard: " << e.what() << "\n";
    return kFail;
  }
  boost::asio::io_context ioc;
  boost::asio::signal_set signals(ioc, SIGINT, SIGTERM);
  signals.async_wait([&](const boost::system::error_code&, int) { server->stop(); });
  ioc.run();
  std::cerr << "flowguard: stopped after " << server->forwarded_requests() << " forwarded, "
            << server->blocked_requests() << " blocked\n";
  return 0;
}

int cmd_list() {
  std::cout << "specs:\n";
  for (const auto& s : library::builtin_spec_sources()) std::cout << "  " << s.name << "\n";
  std::cout << "scenarios:\n";
  for (const auto& sc : library::builtin_scenarios()) {
    std::cout << "  " << sc.group << "/" << sc.name << " (" << library::to_string(sc.outcome) << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowguard: protocol-aware HTTP security monitor"};
  app.require_subcommand(1);

  std::vector<std::string> files;
  auto* validate = app.add_subcommand("validate", "Parse and check protocol specs");
  validate->add_option("spec", files, "Spec files or builtin names")->required();

  std::string out;
  auto* graph = app.add_subcommand("graph", "Export the composed automaton as Graphviz DOT");
  graph->add_option("spec", files, "Spec files or builtin names, in composition order")->required();
  graph->add_option("-o,--output", out, "Output file (default stdout)");

  std::uint64_t seed = 0;
  bool builtin = false;
  auto* replay = app.add_subcommand("replay", "Replay scenario traces against the monitor");
  replay->add_option("scenario", files, "Scenario files, or builtin names/groups with --builtin");
  replay->add_option("--seed", seed, "Placeholder RNG seed");
  replay->add_flag("--builtin", builtin, "Use the bundled scenarios");

  std::string config;
  auto* serve = app.add_subcommand("serve", "Run the intercepting proxy");
  serve->add_option("-c,--config", config, "Config file")->required();

  auto* list = app.add_subcommand("list", "List bundled specs and scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*validate) return cmd_validate(files);
  if (*graph) return cmd_graph(files, out);
  if (*replay) {
    if (files.empty() && !builtin) {
      std::cerr << "flowguard replay: give scenario files or --builtin\n";
      return kUsage;
    }
    return cmd_replay(files, builtin, seed);
  }
  if (*serve) return cmd_serve(config);
  if (*list) return cmd_list();
  return kUsage;
}
