#include "dprqkd/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "dprqkd/channel.hpp"
#include "dprqkd/rng.hpp"

namespace dprqkd {

unsigned thread_cap_from_env() {
  if (const char* env = std::getenv("DPRQKD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

std::vector<double> axis_points(const SweepSpec& spec) {
  std::vector<double> pts;
  for (double x = spec.start; x <= spec.stop + 1e-9; x += spec.step)
    pts.push_back(x);
  return pts;
}

namespace {

ChannelSpec channel_at(const ChannelSpec& base, SweepSpec::Axis axis, double x) {
  ChannelSpec ch = base;
  if (axis == SweepSpec::Axis::LossDb) {
    ch.mode = ChannelSpec::Mode::ExplicitLoss;
    ch.explicit_loss_db = x;
  } else {
    ch.mode = ChannelSpec::Mode::FiberLength;
    ch.fiber_length_km = x;
  }
  return ch;
}

SweepRow row_from_report(const RateReport& rep, const std::string& engine) {
  SweepRow row;
  row.protocol = rep.protocol;
  row.loss_db = rep.loss_db;
  row.distance_km = rep.distance_km;
  row.r_sift_hz = rep.r_sift_hz;
  row.qber = rep.qber_pred;
  row.qber_time = rep.qber_time;
  row.qber_phase = rep.qber_phase;
  row.i_ab = rep.i_ab;
  row.i_ae = rep.i_ae;
  row.r_sk_bps = rep.r_sk_bps;
  row.bound_valid = rep.bound_valid;
  row.saturated = rep.saturated;
  row.engine = engine;
  return row;
}

void fill_coprop(SweepRow& row, const ChannelSpec& ch, const RateReport& rep) {
  row.background_hz = rep.background_hz;
  if (ch.classical) {
    const double sync = sync_power_at_rx_dbm(*ch.classical, ch);
    row.classical_power_at_rx_dbm = sync;
    row.sync_warning = sync < ch.classical->sync_threshold_dbm;
  } else {
    row.classical_power_at_rx_dbm = std::nullopt;
    row.sync_warning = std::nullopt;
  }
}

}  // namespace

std::vector<SweepRow> run_sweep(const Config& base, const SweepSpec& spec,
                                bool copropagation, unsigned max_threads) {
  const auto points = axis_points(spec);
  struct Task {
    ProtocolId protocol;
    double x;
    size_t order;
  };
  std::vector<Task> tasks;
  size_t order = 0;
  for (ProtocolId proto : spec.protocols)
    for (double x : points) tasks.push_back({proto, x, order++});

  const bool want_analytic = spec.engine != SweepSpec::Engine::MonteCarlo;
  const bool want_mc = spec.engine != SweepSpec::Engine::Analytic;
  std::vector<std::vector<SweepRow>> results(tasks.size());

  unsigned cap = max_threads ? max_threads : thread_cap_from_env();
  cap = std::max(1u, std::min<unsigned>(cap, tasks.size() ? tasks.size() : 1));
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      const ChannelSpec ch = channel_at(base.channel, spec.axis, task.x);
      SystemParams params = base.params;
      if (task.protocol != base.protocol)
        params.mu = default_params(task.protocol).mu;
      if (task.protocol == ProtocolId::Bb84Decoy && !params.bb84)
        params.bb84 = BB84Params{};

      const RateReport analytic =
          predict_rates(task.protocol, params, ch, base.detector);
      if (want_analytic) {
        SweepRow row = row_from_report(analytic, "analytic");
        if (copropagation) fill_coprop(row, ch, analytic);
        results[i].push_back(std::move(row));
      }
      if (want_mc && task.protocol != ProtocolId::Bb84Decoy) {
        McRunConfig mc;
        mc.n_pulses = spec.mc_pulses;
        mc.seed = derive_stream(spec.seed, 0x50545349ULL + task.order);
        mc.protocol = task.protocol;
        mc.params = params;
        mc.channel = ch;
        mc.detector = base.detector;
        const McResult r = mc_run(mc);
        SweepRow row;
        row.protocol = task.protocol;
        row.loss_db = ch.loss_db();
        row.distance_km = ch.distance_km();
        row.r_sift_hz = r.r_sift_hz;
        row.qber = r.qber_meas.qber_total;
        row.qber_time = r.qber_meas.qber_time;
        row.qber_phase = r.qber_meas.qber_phase;
        row.i_ab = 1.0 - binary_entropy(std::clamp(r.qber_meas.qber_total, 0.0, 1.0));
        row.i_ae = analytic.i_ae;
        row.r_sk_bps =
            r.r_sift_hz * std::max(0.0, row.i_ab - row.i_ae) / params.ec_efficiency;
        row.bound_valid = analytic.bound_valid;
        row.saturated = analytic.saturated;
        row.engine = "mc";
        if (copropagation) fill_coprop(row, ch, analytic);
        results[i].push_back(std::move(row));
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < cap; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  std::vector<SweepRow> rows;
  for (auto& group : results)
    for (auto& row : group) rows.push_back(std::move(row));
  return rows;
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}
}  // namespace

std::string sweep_csv_header(bool copropagation) {
  std::string h =
      "protocol,loss_db,distance_km,r_sift_hz,qber,qber_time,qber_phase,i_ab,"
      "i_ae,r_sk_bps,bound_valid,saturated,engine";
  if (copropagation)
    h += ",background_rate_hz,classical_power_at_rx_dbm,sync_warning";
  return h + "\n";
}

std::string sweep_csv_row(const SweepRow& row, bool copropagation) {
  std::ostringstream os;
  os << protocol_name(row.protocol) << ',' << fmt(row.loss_db) << ','
     << fmt(row.distance_km) << ',' << fmt(row.r_sift_hz) << ',' << fmt(row.qber)
     << ',' << fmt(row.qber_time) << ',' << fmt(row.qber_phase) << ','
     << fmt(row.i_ab) << ',' << fmt(row.i_ae) << ',' << fmt(row.r_sk_bps) << ','
     << (row.bound_valid ? 1 : 0) << ',' << (row.saturated ? 1 : 0) << ','
     << row.engine;
  if (copropagation) {
    os << ',' << (row.background_hz ? fmt(*row.background_hz) : "0");
    os << ','
       << (row.classical_power_at_rx_dbm ? fmt(*row.classical_power_at_rx_dbm)
                                         : "");
    os << ',' << (row.sync_warning ? (*row.sync_warning ? "1" : "0") : "");
  }
  os << '\n';
  return os.str();
}

StabilityResult run_stability(const Config& cfg, size_t n_batches,
                              uint64_t batch_pulses, uint64_t seed,
                              unsigned max_threads) {
  McRunConfig mc;
  mc.n_pulses = batch_pulses;
  mc.seed = seed;
  mc.protocol = cfg.protocol;
  mc.params = cfg.params;
  mc.channel = cfg.channel;
  mc.detector = cfg.detector;
  const auto batches =
      mc_run_batches(mc, n_batches, max_threads ? max_threads : thread_cap_from_env());

  StabilityResult st;
  st.batch_qber.reserve(n_batches);
  st.batch_sifted.reserve(n_batches);
  double sum = 0.0, sum2 = 0.0;
  for (const auto& b : batches) {
    st.batch_qber.push_back(b.qber_meas.qber_total);
    st.batch_sifted.push_back(b.n_sifted);
    sum += b.qber_meas.qber_total;
    sum2 += b.qber_meas.qber_total * b.qber_meas.qber_total;
  }
  const double n = static_cast<double>(n_batches);
  st.mean_qber = sum / n;
  const double var = std::max(0.0, sum2 / n - st.mean_qber * st.mean_qber);
  st.stddev_qber = std::sqrt(var * (n > 1 ? n / (n - 1) : 1.0));

  st.histogram.assign(20, 0);
  st.hist_lo = *std::min_element(st.batch_qber.begin(), st.batch_qber.end());
  st.hist_hi = *std::max_element(st.batch_qber.begin(), st.batch_qber.end());
  const double width = st.hist_hi - st.hist_lo;
  for (double q : st.batch_qber) {
    size_t bin = width > 0.0
                     ? std::min<size_t>(19, static_cast<size_t>((q - st.hist_lo) /
                                                                width * 20.0))
                     : 0;
    ++st.histogram[bin];
  }
  return st;
}

std::string stability_csv(const StabilityResult& st) {
  std::ostringstream os;
  os << "batch,qber,n_sifted\n";
  for (size_t i = 0; i < st.batch_qber.size(); ++i)
    os << i << ',' << fmt(st.batch_qber[i]) << ',' << st.batch_sifted[i] << '\n';
  os << "# mean_qber=" << fmt(st.mean_qber) << " stddev_qber=" << fmt(st.stddev_qber)
     << "\n";
  os << "# histogram bins=20 lo=" << fmt(st.hist_lo) << " hi=" << fmt(st.hist_hi)
     << "\n";
  for (size_t i = 0; i < st.histogram.size(); ++i)
    os << "# bin," << i << ',' << st.histogram[i] << '\n';
  return os.str();
}

}  // namespace dprqkd
