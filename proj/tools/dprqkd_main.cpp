// Command-line front end: parameter sweeps, Monte Carlo runs, mu optimization,
// stability batches, co-propagation studies and the two-party sifting link.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dprqkd/channel.hpp"
#include "dprqkd/keyrate.hpp"
#include "dprqkd/model.hpp"
#include "dprqkd/montecarlo.hpp"
#include "dprqkd/netlink.hpp"
#include "dprqkd/rng.hpp"
#include "dprqkd/runner.hpp"

namespace {

using namespace dprqkd;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct RangeSpec {
  double start = 0.0, stop = 0.0, step = 0.0;
  bool single = false;
};

RangeSpec parse_range(const std::string& text) {
  RangeSpec r;
  const auto c1 = text.find(':');
  if (c1 == std::string::npos) {
    r.start = r.stop = std::stod(text);
    r.step = 1.0;
    r.single = true;
    return r;
  }
  const auto c2 = text.find(':', c1 + 1);
  if (c2 == std::string::npos)
    throw std::invalid_argument("expected A:B:STEP, got " + text);
  r.start = std::stod(text.substr(0, c1));
  r.stop = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
  r.step = std::stod(text.substr(c2 + 1));
  if (!(r.step > 0.0) || !(r.start <= r.stop))
    throw std::invalid_argument("range must satisfy start <= stop, step > 0");
  return r;
}

std::vector<ProtocolId> parse_protocols(const std::string& list) {
  std::vector<ProtocolId> out;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto p = protocol_from_name(tok);
    if (!p) throw std::invalid_argument("unknown protocol: " + tok);
    out.push_back(*p);
  }
  if (out.empty()) throw std::invalid_argument("no protocols given");
  return out;
}

Config resolve_config(const std::string& config_path, const std::string& protocol) {
  Config cfg;
  if (!config_path.empty()) {
    cfg = load_config_file(config_path);
  } else {
    cfg.protocol = ProtocolId::Dpts;
    cfg.params = default_params(cfg.protocol);
  }
  if (!protocol.empty()) {
    auto p = protocol_from_name(protocol);
    if (!p) throw std::invalid_argument("unknown protocol: " + protocol);
    cfg.protocol = *p;
    if (config_path.empty()) cfg.params = default_params(*p);
    if (*p == ProtocolId::Bb84Decoy && !cfg.params.bb84)
      cfg.params.bb84 = BB84Params{};
  }
  return cfg;
}

int check_config(const Config& cfg) {
  const auto errors = validate(cfg.params, cfg.channel, cfg.detector);
  if (errors.empty()) return kExitOk;
  for (const auto& e : errors) std::cerr << "invalid configuration: " << e << "\n";
  return kExitValidation;
}

void write_output(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot open " + out_path);
  os << text;
}

bool parse_endpoint(const std::string& endpoint, std::string* host, int* port) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) return false;
  *host = endpoint.substr(0, colon);
  *port = std::stoi(endpoint.substr(colon + 1));
  return *port > 0 && *port < 65536 && !host->empty();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dprqkd: DPR-family QKD link simulator and analysis tool"};
  app.require_subcommand(1);

  std::string config_path, protocol_list, loss_range, dist_range, engine = "analytic";
  std::string out_path;
  uint64_t pulses = 1000000, seed = 1;

  auto add_common = [&](CLI::App* cmd, bool with_axis) {
    cmd->add_option("--config", config_path, "configuration file (key = value)");
    cmd->add_option("--seed", seed, "RNG seed");
    cmd->add_option("--out", out_path, "output path, '-' for stdout");
    if (with_axis) {
      cmd->add_option("--loss-db", loss_range, "channel loss axis A:B:STEP or value");
      cmd->add_option("--distance-km", dist_range,
                      "fiber length axis A:B:STEP or value");
    }
  };

  // rate-sweep
  auto* sweep_cmd = app.add_subcommand("rate-sweep", "analytic/MC rate curves");
  add_common(sweep_cmd, true);
  sweep_cmd->add_option("--protocol", protocol_list, "comma-separated protocols");
  sweep_cmd->add_option("--engine", engine, "analytic | mc | both");
  sweep_cmd->add_option("--pulses", pulses, "MC pulses per point");

  // simulate
  std::string clicks_out, prep_out, sim_protocol;
  auto* sim_cmd = app.add_subcommand("simulate", "single Monte Carlo run");
  add_common(sim_cmd, true);
  sim_cmd->add_option("--protocol", sim_protocol, "protocol");
  sim_cmd->add_option("--pulses", pulses, "number of time slots");
  sim_cmd->add_option("--emit-clicks", clicks_out, "write click records here");
  sim_cmd->add_option("--emit-prep", prep_out, "write the preparation record here");

  // optimize-mu
  std::string opt_protocol;
  double mu_min = 0.01, mu_max = 1.0;
  auto* opt_cmd = app.add_subcommand("optimize-mu", "mean photon number search");
  add_common(opt_cmd, true);
  opt_cmd->add_option("--protocol", opt_protocol, "protocol");
  opt_cmd->add_option("--mu-min", mu_min, "search lower bound");
  opt_cmd->add_option("--mu-max", mu_max, "search upper bound");

  // stability
  size_t n_batches = 60;
  uint64_t batch_pulses = 1000000;
  std::string stab_protocol;
  auto* stab_cmd = app.add_subcommand("stability", "batched QBER time series");
  add_common(stab_cmd, true);
  stab_cmd->add_option("--protocol", stab_protocol, "protocol");
  stab_cmd->add_option("--batches", n_batches, "number of batches");
  stab_cmd->add_option("--batch-pulses", batch_pulses, "slots per batch");

  // link
  std::string role, endpoint, prep_in, clicks_in, key_out = "key.bin",
                               log_out = "session.log";
  double sample_fraction = 0.1, timeout_s = 30.0;
  uint64_t sample_seed = 1;
  std::string link_protocol;
  auto* link_cmd = app.add_subcommand("link", "two-party sifting session");
  add_common(link_cmd, false);
  link_cmd->add_option("--protocol", link_protocol, "protocol");
  link_cmd->add_option("--role", role, "alice | bob")->required();
  link_cmd->add_option("--endpoint", endpoint, "host:port")->required();
  link_cmd->add_option("--prep", prep_in, "preparation record (alice)");
  link_cmd->add_option("--clicks", clicks_in, "click records (bob)");
  link_cmd->add_option("--key-out", key_out, "final key file");
  link_cmd->add_option("--log-out", log_out, "session log file");
  link_cmd->add_option("--sample-fraction", sample_fraction, "QBER sample share");
  link_cmd->add_option("--sample-seed", sample_seed, "QBER sample seed");
  link_cmd->add_option("--timeout", timeout_s, "network timeout, seconds");

  // copropagation
  std::string cop_protocol;
  auto* cop_cmd =
      app.add_subcommand("copropagation", "sweep with the classical channel");
  add_common(cop_cmd, true);
  cop_cmd->add_option("--protocol", cop_protocol, "protocol");
  cop_cmd->add_option("--engine", engine, "analytic | mc | both");
  cop_cmd->add_option("--pulses", pulses, "MC pulses per point");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sweep_cmd->parsed() || cop_cmd->parsed()) {
      const bool coprop = cop_cmd->parsed();
      Config cfg = resolve_config(
          config_path, coprop ? cop_protocol : std::string());
      if (coprop && !cfg.channel.classical) {
        std::cerr << "copropagation: config has no classical channel\n";
        return kExitValidation;
      }
      if (int rc = check_config(cfg)) return rc;

      SweepSpec spec;
      if (!protocol_list.empty())
        spec.protocols = parse_protocols(protocol_list);
      else if (coprop)
        spec.protocols = {cfg.protocol};
      else
        spec.protocols = {ProtocolId::Dpts, ProtocolId::Dps, ProtocolId::Cow};
      if (!loss_range.empty() && !dist_range.empty())
        throw std::invalid_argument("--loss-db and --distance-km are exclusive");
      if (!dist_range.empty()) {
        const auto r = parse_range(dist_range);
        spec.axis = SweepSpec::Axis::DistanceKm;
        spec.start = r.start;
        spec.stop = r.stop;
        spec.step = r.step;
      } else {
        const auto r = parse_range(loss_range.empty()
                                       ? (coprop ? "10:170:40" : "5:40:5")
                                       : loss_range);
        spec.axis = loss_range.empty() && coprop ? SweepSpec::Axis::DistanceKm
                                                 : SweepSpec::Axis::LossDb;
        spec.start = r.start;
        spec.stop = r.stop;
        spec.step = r.step;
      }
      if (engine == "analytic") spec.engine = SweepSpec::Engine::Analytic;
      else if (engine == "mc") spec.engine = SweepSpec::Engine::MonteCarlo;
      else if (engine == "both") spec.engine = SweepSpec::Engine::Both;
      else throw std::invalid_argument("unknown engine: " + engine);
      spec.mc_pulses = pulses;
      spec.seed = seed;

      const auto rows = run_sweep(cfg, spec, coprop);
      std::string text = sweep_csv_header(coprop);
      for (const auto& row : rows) text += sweep_csv_row(row, coprop);
      write_output(out_path, text);
      return kExitOk;
    }

    if (sim_cmd->parsed()) {
      Config cfg = resolve_config(config_path, sim_protocol);
      if (!loss_range.empty())
        cfg.channel = ChannelSpec::loss(parse_range(loss_range).start,
                                        cfg.channel.loss_coeff_db_per_km);
      if (!dist_range.empty())
        cfg.channel = ChannelSpec::fiber(parse_range(dist_range).start,
                                         cfg.channel.loss_coeff_db_per_km);
      if (int rc = check_config(cfg)) return rc;

      McRunConfig mc;
      mc.n_pulses = pulses;
      mc.seed = seed;
      mc.protocol = cfg.protocol;
      mc.params = cfg.params;
      mc.channel = cfg.channel;
      mc.detector = cfg.detector;
      mc.emit_clicks = !clicks_out.empty();
      mc.keep_prep = !prep_out.empty();
      const McResult res = mc_run(mc);

      if (!clicks_out.empty()) {
        std::vector<ClickRecord> all = res.clicks;
        all.insert(all.end(), res.monitor_clicks.begin(), res.monitor_clicks.end());
        save_clicks(all, cfg.params.slot_period_s(), clicks_out);
      }
      if (!prep_out.empty()) save_train(res.prep, prep_out);

      std::ostringstream os;
      os << "protocol=" << protocol_name(cfg.protocol)
         << " loss_db=" << cfg.channel.loss_db() << " slots=" << res.n_slots
         << "\n";
      os << "r_sift_hz=" << res.r_sift_hz << " n_sifted=" << res.n_sifted << "\n";
      os << "qber=" << res.qber_meas.qber_total
         << " qber_time=" << res.qber_meas.qber_time
         << " qber_phase=" << res.qber_meas.qber_phase << "\n";
      if (res.qber_meas.visibility_est)
        os << "visibility_est=" << *res.qber_meas.visibility_est << "\n";
      os << "clicks_per_detector=";
      for (size_t i = 0; i < res.n_clicks_per_detector.size(); ++i)
        os << (i ? "," : "") << res.n_clicks_per_detector[i];
      os << " n_dark=" << res.n_dark << "\n";
      os << "pulses_per_second=" << (res.wall_time_s > 0.0
                                         ? static_cast<double>(res.n_slots) /
                                               res.wall_time_s
                                         : 0.0)
         << "\n";
      write_output(out_path, os.str());
      return kExitOk;
    }

    if (opt_cmd->parsed()) {
      Config cfg = resolve_config(config_path, opt_protocol);
      if (!loss_range.empty())
        cfg.channel = ChannelSpec::loss(parse_range(loss_range).start,
                                        cfg.channel.loss_coeff_db_per_km);
      if (!dist_range.empty())
        cfg.channel = ChannelSpec::fiber(parse_range(dist_range).start,
                                         cfg.channel.loss_coeff_db_per_km);
      if (int rc = check_config(cfg)) return rc;
      const auto opt =
          optimize_mu(cfg.protocol, cfg.params, cfg.channel, cfg.detector,
                      mu_min, mu_max);
      std::ostringstream os;
      os << "protocol,loss_db,mu_opt,r_sk_opt,all_zero\n";
      os << protocol_name(cfg.protocol) << ',' << cfg.channel.loss_db() << ','
         << opt.mu_opt << ',' << opt.r_sk_opt << ',' << (opt.all_zero ? 1 : 0)
         << "\n";
      write_output(out_path, os.str());
      return kExitOk;
    }

    if (stab_cmd->parsed()) {
      Config cfg = resolve_config(config_path, stab_protocol);
      if (!loss_range.empty())
        cfg.channel = ChannelSpec::loss(parse_range(loss_range).start,
                                        cfg.channel.loss_coeff_db_per_km);
      if (!dist_range.empty())
        cfg.channel = ChannelSpec::fiber(parse_range(dist_range).start,
                                         cfg.channel.loss_coeff_db_per_km);
      if (int rc = check_config(cfg)) return rc;
      const auto st = run_stability(cfg, n_batches, batch_pulses, seed);
      write_output(out_path, stability_csv(st));
      return kExitOk;
    }

    if (link_cmd->parsed()) {
      Config cfg = resolve_config(config_path, link_protocol);
      if (int rc = check_config(cfg)) return rc;
      std::string host;
      int port = 0;
      if (!parse_endpoint(endpoint, &host, &port)) {
        std::cerr << "link: bad endpoint " << endpoint << "\n";
        return kExitValidation;
      }
      netlink::SessionOptions opts;
      opts.sample_fraction = sample_fraction;
      opts.sample_seed = sample_seed;
      opts.timeout_s = timeout_s;

      netlink::SessionResult result;
      if (role == "alice") {
        if (prep_in.empty()) {
          std::cerr << "link: alice needs --prep\n";
          return kExitValidation;
        }
        const PulseTrain prep = load_train(prep_in);
        auto stream = netlink::tcp_listen_accept(host, port, timeout_s);
        result = netlink::alice_session(*stream, prep, cfg, opts);
      } else if (role == "bob") {
        if (clicks_in.empty()) {
          std::cerr << "link: bob needs --clicks\n";
          return kExitValidation;
        }
        double slot_period = cfg.params.slot_period_s();
        const auto clicks = load_clicks(clicks_in, &slot_period);
        auto stream = netlink::tcp_connect(host, port, timeout_s);
        result = netlink::bob_session(*stream, clicks, slot_period, cfg, opts);
      } else {
        std::cerr << "link: role must be alice or bob\n";
        return kExitValidation;
      }

      std::ofstream log(log_out);
      for (const auto& line : result.log) log << line << "\n";
      if (!result.done()) {
        std::cerr << "link: session aborted: " << result.abort_reason << "\n";
        return kExitRuntime;
      }
      save_key(result.final_key, key_out);
      std::cout << "link: done n_sifted=" << result.n_sifted
                << " sampled_qber=" << result.sampled_qber
                << " final_bits=" << result.final_key.size() << "\n";
      return kExitOk;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
