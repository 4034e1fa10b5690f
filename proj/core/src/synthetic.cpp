#include "ctt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ctt/pgm.hpp"
#include "ctt/rng.hpp"

namespace ctt {

namespace {

Tensor render_blob(std::size_t size, double center_y, double center_x,
                   double sigma) {
  Tensor img({size, size});
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) - center_y;
      const double dx = static_cast<double>(x) - center_x;
      const double v = std::exp(-(dy * dy + dx * dx) * inv_two_sigma_sq);
      // Snap to the 8-bit grid so rendered and reloaded pixels agree.
      img.mutable_values()[y * size + x] =
          static_cast<double>(std::lround(v * 255.0)) / 255.0;
    }
  }
  return img;
}

std::string sample_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%05zu", index);
  return buf;
}

}  // namespace

double planted_post_va(double u, double v, double pre_va, double noise,
                       const SyntheticConfig& cfg) {
  const double raw =
      cfg.coeff_u * u + cfg.coeff_v * v + cfg.coeff_pre * pre_va + noise;
  return std::clamp(raw, 0.0, kVaMax);
}

std::vector<SyntheticSample> generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.count == 0) {
    throw std::invalid_argument("generate_synthetic: count must be >= 1");
  }
  if (cfg.image_size == 0) {
    throw std::invalid_argument("generate_synthetic: image_size must be positive");
  }
  const double size = static_cast<double>(cfg.image_size);
  const double margin = cfg.margin_fraction * size;
  const double lo = margin, hi = size - 1.0 - margin;
  const double mid = (size - 1.0) / 2.0;
  const double sigma = cfg.blob_sigma_fraction * size;

  std::vector<SyntheticSample> samples;
  samples.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    // Per-sample stream: sample i is the same no matter the total count.
    Rng rng(mix_seed(cfg.seed, i));
    SyntheticSample s;
    s.u = rng.uniform();
    s.v = rng.uniform();
    const double pre = rng.uniform(0.1, 0.9);
    s.noise = rng.normal(0.0, cfg.noise_sigma);

    s.record.id = sample_id(i);
    s.record.pre_va = pre;
    s.record.post_va = planted_post_va(s.u, s.v, pre, s.noise, cfg);
    // Horizontal view: blob x-position encodes u. Vertical: y encodes v.
    s.record.hor_image = render_blob(cfg.image_size, mid, lo + s.u * (hi - lo), sigma);
    s.record.ver_image = render_blob(cfg.image_size, lo + s.v * (hi - lo), mid, sigma);
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_synthetic_dataset(const std::filesystem::path& dir,
                             const std::vector<SyntheticSample>& samples) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.csv");
  std::ofstream latents(dir / "latents.csv");
  if (!manifest || !latents) {
    throw DataError("write_synthetic_dataset: cannot write under " + dir.string());
  }
  manifest << kManifestHeader << "\n";
  latents << "id,u,v,pre_va,post_va,noise\n";
  char line[256];
  for (const SyntheticSample& s : samples) {
    const std::string hor = "images/" + s.record.id + "_hor.pgm";
    const std::string ver = "images/" + s.record.id + "_ver.pgm";
    save_pgm(dir / hor, s.record.hor_image);
    save_pgm(dir / ver, s.record.ver_image);
    std::snprintf(line, sizeof(line), "%s,%s,%s,%.17g,%.17g\n",
                  s.record.id.c_str(), hor.c_str(), ver.c_str(),
                  s.record.pre_va, s.record.post_va);
    manifest << line;
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  s.record.id.c_str(), s.u, s.v, s.record.pre_va,
                  s.record.post_va, s.noise);
    latents << line;
  }
}

std::vector<SampleRecord> strip_latents(const std::vector<SyntheticSample>& samples) {
  std::vector<SampleRecord> records;
  records.reserve(samples.size());
  for (const SyntheticSample& s : samples) records.push_back(s.record);
  return records;
}

}  // namespace ctt
