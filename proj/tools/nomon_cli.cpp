#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "nomon/session.hpp"

using namespace nomon;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
namespace fs = std::filesystem;

namespace {

const fs::path kData = NOMON_DATA_DIR;

struct ModelSource {
  std::string corpus = (kData / "corpus.txt").string();
  std::string prefix;
  int order = 6;

  void add(CLI::App* app) {
    app->add_option("--corpus", corpus, "Training corpus, one sentence per line")->capture_default_str();
    app->add_option("--lm", prefix, "Load a model saved by train-lm instead of training");
    app->add_option("--order", order, "Character n-gram order when training")->capture_default_str();
  }

  lm::LanguageModel load() const {
    if (!prefix.empty()) return lm::LanguageModel::load(prefix);
    return lm::LanguageModel::train(lm::read_lines(corpus), order);
  }
};

void write_output(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (path.empty() || path == "-") {
    body(std::cout);
    return;
  }
  lab::write_file(path, body);
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string engine = "nomon";
  std::string phrases = (kData / "phrases.tsv").string();
  std::size_t count = 10;
  std::string ratio = "2:1";
  std::uint64_t seed = 1;
  std::string user = "expert";
  std::string click_dist = "expert";
  int w_c = 3, w_max = -1, l = 14, j = 10, k = 10;
  std::string ordering = "frequency", placement = "top";
  std::string out, log;
  ModelSource model;
};

int simulate(const SimulateArgs& a) {
  const auto model = a.model.load();
  const lm::Predictor predictor(model);
  const auto phrases = lab::load_phrases(a.phrases, model.vocab, lab::parse_ratio(a.ratio), a.count, a.seed);
  lab::CellParams cell;
  cell.engine = lab::engine_from_string(a.engine);
  if (cell.engine == lab::EngineKind::nomon) {
    cell.w_c = a.w_c;
    cell.w_max = a.w_max < 0 ? 17 : a.w_max;
    cell.l = a.l;
    cell.placement = Placement::inline_;
    build_nomon_layout(cell.w_c, cell.w_max);
  } else {
    cell.w_max = a.w_max < 0 ? 7 : a.w_max;
    cell.ordering = ordering_from_string(a.ordering);
    cell.placement = placement_from_string(a.placement);
    cell.j = a.j;
    cell.k = a.k;
    build_rcs_layout(cell.ordering, cell.placement, cell.w_max);
  }
  if (a.user != "expert" && a.user != "ideal") throw Error("simulate: --user must be expert or ideal");
  const lab::UserSetup setup{a.user, a.click_dist};

  // Phrases run back to back in one log, each shifted past the previous one.
  SessionLog combined;
  combined.append(msg::config, 0,
                  {{"engine", a.engine}, {"source", "simulator"}, {"cell", lab::cell_label(cell)},
                   {"user", a.user}, {"seed", a.seed}});
  Timestamp offset = 0;
  std::vector<PhraseMetrics> metrics;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    const auto run = lab::run_phrase(cell, phrases[i], predictor, setup, lab::run_seed(a.seed, i, 0));
    for (const auto& m : run.log.messages())
      combined.append(m.kind, m.server_time + offset, m.payload,
                      m.client_time ? std::optional<Timestamp>(*m.client_time + offset) : std::nullopt);
    offset = combined.messages().back().server_time + 1000;
    for (auto& m : metrics_from_log(run.log)) metrics.push_back(std::move(m));
  }
  write_output(a.out, [&](std::ostream& os) {
    os << kMetricsCsvHeader << '\n';
    for (const auto& m : metrics) write_metrics_csv_row(os, "sim", a.engine, m);
  });
  if (!a.log.empty()) lab::write_file(a.log, [&](std::ostream& os) { combined.write_jsonl(os); });
  return 0;
}

// ---------------------------------------------------------------- metrics / replay

SessionLog read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open log " + path);
  return SessionLog::read_jsonl(in);
}

std::string log_engine(const SessionLog& log) {
  for (const auto& m : log.messages())
    if (m.kind == msg::config) return m.payload.value("engine", std::string{});
  return "";
}

int metrics_cmd(const std::string& log_path, const std::string& out, std::string session_name, std::string engine) {
  const auto log = read_log(log_path);
  if (session_name.empty()) session_name = fs::path(log_path).stem().string();
  if (engine.empty()) engine = log_engine(log);
  write_output(out, [&](std::ostream& os) {
    os << kMetricsCsvHeader << '\n';
    for (const auto& m : metrics_from_log(log)) write_metrics_csv_row(os, session_name, engine, m);
  });
  return 0;
}

int replay_cmd(const std::string& log_path, const std::string& out, const ModelSource& src) {
  const auto log = read_log(log_path);
  const auto cfg = session::config_from_log(log);
  std::optional<lm::LanguageModel> model;
  if (cfg.task == session::Task::text) model = src.load();
  const auto r = session::replay(log, model ? &*model : nullptr);
  std::vector<std::string> original;
  for (const auto& m : log.messages())
    if (m.kind == msg::selection) original.push_back(m.payload.at("id").get<std::string>());
  if (!out.empty()) lab::write_file(out, [&](std::ostream& os) { r.log.write_jsonl(os); });
  std::cout << "selections: " << r.selections.size() << " replayed, " << original.size() << " logged\n";
  std::cout << "final text: \"" << r.final_text << "\"\n";
  const bool same = r.selections == original;
  std::cout << (same ? "replay matches the log\n" : "replay DIVERGES from the log\n");
  return same ? 0 : 2;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;
  std::string engine = "nomon";
  std::string task = "text";
  std::string phrases = (kData / "phrases.tsv").string();
  std::size_t count = 10;
  std::uint64_t seed = 1;
  std::string profiles = "profiles";
  std::string logs = "logs";
  ModelSource model;
};

struct ServerContext {
  session::SessionConfig base;
  std::shared_ptr<const lm::LanguageModel> model;
  fs::path logs;
  std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();

  Timestamp now() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - epoch).count();
  }
};

/// One WebSocket client. The first message must be a hello; its payload may
/// override any session setting. All handlers run on the single io thread.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, const ServerContext& ctx)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), ctx_(ctx) {}

  void start() {
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->read();
    });
  }

 private:
  void read() {
    ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->closed();
      const std::string raw = beast::buffers_to_string(self->in_.data());
      self->in_.consume(self->in_.size());
      self->on_message(raw);
      self->read();
    });
  }

  void on_message(const std::string& raw) {
    const Timestamp now = ctx_.now();
    if (!session_) {
      try {
        const auto hello = json::parse(raw).get<WireMessage>();
        if (hello.kind != msg::hello) throw Error("send hello first");
        auto cfg = ctx_.base;
        session::apply_config(cfg, hello.payload);
        session_.emplace(std::move(cfg), ctx_.model.get());
      } catch (const std::exception& e) {
        WireMessage err;
        err.kind = msg::error;
        err.server_time = now;
        err.payload = {{"code", "bad_setting"}, {"detail", e.what()}};
        send({err});
        return;
      }
    }
    send(session_->tick(now));
    send(session_->handle_text(raw, now));
    arm();
  }

  void arm() {
    if (!session_ || closed_) return;
    const auto deadline = session_->next_deadline();
    if (!deadline) return;
    timer_.expires_at(ctx_.epoch + std::chrono::milliseconds(*deadline));
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || !self->session_) return;
      self->send(self->session_->tick(self->ctx_.now()));
      self->arm();
    });
  }

  void send(const std::vector<WireMessage>& ms) {
    for (const auto& m : ms) out_.push_back(json(m).dump());
    if (!writing_) write_next();
  }

  void write_next() {
    if (out_.empty() || closed_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->out_.pop_front();
      if (ec) return self->closed();
      self->write_next();
    });
  }

  void closed() {
    if (closed_) return;
    closed_ = true;
    timer_.cancel();
    if (!session_) return;
    session_->disconnect(ctx_.now());
    try {
      const auto name = session_->config().user_id + "-" + std::to_string(ctx_.now()) + ".jsonl";
      lab::write_file(ctx_.logs / name, [&](std::ostream& os) { session_->log().write_jsonl(os); });
      std::cerr << "session log written to " << (ctx_.logs / name).string() << '\n';
    } catch (const std::exception& e) {
      std::cerr << "could not write session log: " << e.what() << '\n';
    }
  }

  websocket::stream<tcp::socket> ws_;
  asio::steady_timer timer_;
  const ServerContext& ctx_;
  beast::flat_buffer in_;
  std::deque<std::string> out_;
  bool writing_ = false;
  bool closed_ = false;
  std::optional<session::Session> session_;
};

void accept_loop(tcp::acceptor& acceptor, const ServerContext& ctx) {
  acceptor.async_accept([&](beast::error_code ec, tcp::socket socket) {
    if (!ec) std::make_shared<Connection>(std::move(socket), ctx)->start();
    accept_loop(acceptor, ctx);
  });
}

int serve(const ServeArgs& a) {
  ServerContext ctx;
  ctx.model = std::make_shared<const lm::LanguageModel>(a.model.load());
  ctx.base.engine = lab::engine_from_string(a.engine);
  ctx.base.task = session::task_from_string(a.task);
  ctx.base.seed = a.seed;
  ctx.base.profile_dir = a.profiles;
  ctx.base.phrases = lab::load_phrases(a.phrases, ctx.model->vocab, lab::MixRatio{}, a.count, a.seed);
  ctx.base.validate();
  ctx.logs = a.logs;
  asio::io_context io;
  tcp::acceptor acceptor(io, {asio::ip::make_address(a.host), a.port});
  std::cerr << "listening on ws://" << a.host << ':' << acceptor.local_endpoint().port() << '\n';
  accept_loop(acceptor, ctx);
  asio::signal_set signals(io, SIGINT, SIGTERM);
  signals.async_wait([&](beast::error_code, int) { io.stop(); });
  io.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nomon and row-column scanning: simulation lab and session server"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate a user typing sampled phrases");
  simulate_cmd->add_option("--engine", sim.engine, "nomon or rcs")->check(CLI::IsMember({"nomon", "rcs"}));
  simulate_cmd->add_option("--phrases", sim.phrases, "Tagged phrase file")->capture_default_str();
  simulate_cmd->add_option("--count", sim.count, "Phrases to sample")->capture_default_str();
  simulate_cmd->add_option("--ratio", sim.ratio, "IV:OOV mix")->capture_default_str();
  simulate_cmd->add_option("--seed", sim.seed)->capture_default_str();
  simulate_cmd->add_option("--user", sim.user, "expert or ideal")->capture_default_str();
  simulate_cmd->add_option("--click-dist", sim.click_dist, "Nomon likelihood: expert, uniform, ideal or a file");
  simulate_cmd->add_option("--w-c", sim.w_c, "Nomon completions per letter")->capture_default_str();
  simulate_cmd->add_option("--w-max", sim.w_max, "Completions shown (default 17 Nomon, 7 RCS)");
  simulate_cmd->add_option("--l", sim.l, "Nomon speed index")->capture_default_str();
  simulate_cmd->add_option("--j", sim.j, "RCS scan speed index")->capture_default_str();
  simulate_cmd->add_option("--k", sim.k, "RCS first-item delay index")->capture_default_str();
  simulate_cmd->add_option("--ordering", sim.ordering, "alphabetical or frequency")->capture_default_str();
  simulate_cmd->add_option("--placement", sim.placement, "top or bottom")->capture_default_str();
  simulate_cmd->add_option("--out", sim.out, "Per-phrase metrics CSV (default stdout)");
  simulate_cmd->add_option("--log", sim.log, "JSON-lines event log");
  sim.model.add(simulate_cmd);

  std::string spec_path, sweep_out = "out";
  int sweep_jobs = 0;
  bool no_dat = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a parameter sweep described by a spec file");
  sweep_cmd->add_option("--spec", spec_path, "Sweep spec")->required();
  sweep_cmd->add_option("--jobs", sweep_jobs, "Worker threads (overrides the spec)");
  sweep_cmd->add_option("--out", sweep_out, "Output directory")->capture_default_str();
  sweep_cmd->add_flag("--no-dat", no_dat, "Skip the plot-ready .dat file");

  std::string scale_engine = "nomon", scale_n = "4,16,64,256", scale_out;
  int scale_trials = 2000;
  std::uint64_t scale_seed = 1;
  auto* scaling_cmd = app.add_subcommand("scaling", "Selection cost versus number of targets");
  scaling_cmd->add_option("--engine", scale_engine)->check(CLI::IsMember({"nomon", "rcs"}))->capture_default_str();
  scaling_cmd->add_option("--n", scale_n, "Target counts, e.g. 4,16,64 or 2..10")->capture_default_str();
  scaling_cmd->add_option("--trials", scale_trials, "Nomon selections per n")->capture_default_str();
  scaling_cmd->add_option("--seed", scale_seed)->capture_default_str();
  scaling_cmd->add_option("--out", scale_out, "CSV path (default stdout)");

  ModelSource train_src;
  std::string train_out;
  int min_count = 2;
  auto* train_cmd = app.add_subcommand("train-lm", "Train and save the character and word models");
  train_src.add(train_cmd);
  train_cmd->add_option("--min-count", min_count, "Vocabulary frequency cut-off")->capture_default_str();
  train_cmd->add_option("--out", train_out, "Output prefix")->required();

  ServeArgs srv;
  auto* serve_cmd = app.add_subcommand("serve", "WebSocket session server");
  serve_cmd->add_option("--host", srv.host)->capture_default_str();
  serve_cmd->add_option("--port", srv.port)->capture_default_str();
  serve_cmd->add_option("--engine", srv.engine, "Default engine")->capture_default_str();
  serve_cmd->add_option("--task", srv.task, "Default task: text, picture, calibration, reaction")->capture_default_str();
  serve_cmd->add_option("--phrases", srv.phrases)->capture_default_str();
  serve_cmd->add_option("--count", srv.count, "Phrases per text session")->capture_default_str();
  serve_cmd->add_option("--seed", srv.seed)->capture_default_str();
  serve_cmd->add_option("--profiles", srv.profiles, "Per-user click distribution directory")->capture_default_str();
  serve_cmd->add_option("--logs", srv.logs, "Session log directory")->capture_default_str();
  srv.model.add(serve_cmd);

  std::string log_path, metrics_out, session_name, engine_name;
  auto* metrics_cmd_app = app.add_subcommand("metrics", "Recompute per-phrase metrics from a session log");
  metrics_cmd_app->add_option("--log", log_path, "JSON-lines log")->required();
  metrics_cmd_app->add_option("--out", metrics_out, "CSV path (default stdout)");
  metrics_cmd_app->add_option("--session", session_name, "Session column (default: log file name)");
  metrics_cmd_app->add_option("--engine", engine_name, "Engine column (default: from the log)");

  std::string replay_log, replay_out;
  ModelSource replay_src;
  auto* replay_app = app.add_subcommand("replay", "Re-run a logged session and compare selections");
  replay_app->add_option("--log", replay_log, "JSON-lines log")->required();
  replay_app->add_option("--out", replay_out, "Write the replayed log here");
  replay_src.add(replay_app);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate_cmd) return simulate(sim);
    if (*sweep_cmd) {
      auto spec = lab::load_sweep_spec(spec_path);
      if (sweep_jobs > 0) spec.jobs = sweep_jobs;
      const auto result = lab::run_sweep(spec);
      for (const auto& c : result.cells)
        for (const auto& f : c.failures) std::cerr << "warning: " << lab::cell_label(c.params) << ": " << f << '\n';
      for (const auto& p : lab::emit(result, sweep_out, !no_dat)) std::cerr << "wrote " << p.string() << '\n';
      return 0;
    }
    if (*scaling_cmd) {
      const auto r =
          lab::run_scaling_study(lab::parse_int_list(scale_n), lab::engine_from_string(scale_engine), scale_trials,
                                 scale_seed);
      write_output(scale_out, [&](std::ostream& os) { lab::write_scaling_csv(os, r); });
      return 0;
    }
    if (*train_cmd) {
      const auto m = lm::LanguageModel::train(lm::read_lines(train_src.corpus), train_src.order, min_count);
      m.save(train_out);
      std::cerr << "vocabulary " << m.vocab.size() << " words; saved to " << train_out << ".*\n";
      return 0;
    }
    if (*serve_cmd) return serve(srv);
    if (*metrics_cmd_app) return metrics_cmd(log_path, metrics_out, session_name, engine_name);
    if (*replay_app) return replay_cmd(replay_log, replay_out, replay_src);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
