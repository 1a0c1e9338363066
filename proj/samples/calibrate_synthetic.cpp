// Calibrates a synthetic hot-wire dataset end to end and prints a few predictions.

#include <cstdio>

#include "gpcal/gpcal.hpp"

int main() {
    gpcal::SynthConfig synth;
    synth.samples_per_step = 3;
    const auto ds = gpcal::synthesize(synth);

    const auto tt = gpcal::split(ds, gpcal::RandomFraction{0.7, 42}).front();

    gpcal::OptimizeConfig cfg;
    cfg.restarts = 2;
    cfg.init_seed = 42;
    const auto trained = gpcal::train_model(tt.train, gpcal::KernelFamily::Exponential, cfg);
    const auto &k = trained.model.kernel().params();
    std::printf("kernel exp: signal_std %.4g  length_scale %.4g  noise_std %.4g\n", k.signal_std, k.length_scale,
                trained.model.noise_std());

    const auto ev = gpcal::evaluate_model(trained.model, tt.test);
    std::printf("train rmse %.4f m/s   test rmse %.4f m/s   test r2 %.5f   coverage %.3f\n", trained.in_sample.rmse,
                ev.report.rmse, ev.report.r2, ev.report.coverage.value_or(0.0));

    std::printf("\n%8s %8s %8s %8s %18s\n", "voltage", "temp", "truth", "mean", "95% interval");
    for (std::size_t i = 0; i < 5 && i < ev.points.size(); ++i) {
        const auto &p = ev.points[i];
        std::printf("%8.4f %8.2f %8.3f %8.3f   [%6.3f, %6.3f]\n", p.voltage, p.air_temp, p.truth, p.mean,
                    p.interval_low, p.interval_high);
    }
    return 0;
}
