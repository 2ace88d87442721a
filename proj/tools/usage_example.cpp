// Minimal library tour: train two small models on flat droplets, then
// predict angles on a convex benchmark and compare with the direct method.

#include <cstdio>

#include "deepangle/deepangle.hpp"

using namespace deepangle;

Model fit(int radius, std::size_t count, int epochs) {
  FlatDatasetConfig dc;
  dc.count = count;
  dc.radius = radius;
  dc.seed = derive_seed(7, std::uint64_t(radius));
  Dataset ds = generate_flat_dataset(dc);
  TrainConfig tc;
  tc.epochs = epochs;
  return train(build_arch(2, radius), ds, Dataset{}, tc).net;
}

int main(int argc, char** argv) {
  const int epochs = argc > 1 ? std::atoi(argv[1]) : 30;
  Model small = fit(4, 500, epochs), large = fit(8, 500, epochs);

  auto bench = generate_curved_benchmark(8, {60}, Convexity::convex, 3);
  AngleField field = run_pipeline(bench.volume, {}, small, large);
  std::printf("pipeline: %zu points, mean %.1f deg (true 60), std %.1f\n", field.summary.count,
              field.summary.stats.mean, field.summary.stats.std);

  auto direct = measure_direct(bench.volume, {});
  std::vector<double> a;
  for (const auto& p : direct.points) a.push_back(p.angle_deg);
  auto st = angle_stats(a);
  std::printf("direct:   %zu points, mean %.1f deg, std %.1f\n", a.size(), st.mean, st.std);
}
