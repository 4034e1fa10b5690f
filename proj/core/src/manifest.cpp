#include "ctt/manifest.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ctt/pgm.hpp"
#include "ctt/rng.hpp"

namespace ctt {

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_va(const std::string& text, const char* column, std::size_t row) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError("manifest row " + std::to_string(row) + ": cannot parse " +
                    column + " value '" + text + "'");
  }
  if (!(value >= 0.0 && value <= kVaMax)) {
    throw DataError("manifest row " + std::to_string(row) + ": " + column +
                    " value " + text + " outside [0, 1.5]");
  }
  return value;
}

}  // namespace

std::vector<SampleRecord> load_manifest(const std::filesystem::path& manifest_path,
                                        std::size_t image_h, std::size_t image_w) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw DataError("load_manifest: cannot open " + manifest_path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("load_manifest: empty manifest " + manifest_path.string());
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw DataError("load_manifest: bad header '" + line + "', expected '" +
                    kManifestHeader + "'");
  }

  const std::filesystem::path base = manifest_path.parent_path();
  std::vector<SampleRecord> records;
  std::set<std::string> seen_ids;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const std::vector<std::string> fields = split_csv_row(line);
    if (fields.size() != 5) {
      throw DataError("manifest row " + std::to_string(row) + ": expected 5 "
                      "columns, got " + std::to_string(fields.size()));
    }
    SampleRecord rec;
    rec.id = fields[0];
    if (rec.id.empty()) {
      throw DataError("manifest row " + std::to_string(row) + ": empty id");
    }
    if (!seen_ids.insert(rec.id).second) {
      throw DataError("manifest row " + std::to_string(row) + ": duplicate id '" +
                      rec.id + "'");
    }
    rec.pre_va = parse_va(fields[3], "pre_va", row);
    rec.post_va = parse_va(fields[4], "post_va", row);
    for (int view = 0; view < 2; ++view) {
      const std::filesystem::path img_path = base / fields[1 + view];
      if (!std::filesystem::exists(img_path)) {
        throw DataError("manifest row " + std::to_string(row) +
                        ": missing image file " + img_path.string());
      }
      Tensor img = load_image(img_path, image_h, image_w);
      (view == 0 ? rec.hor_image : rec.ver_image) = img;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<FoldSplit> kfold_split(std::size_t n, std::size_t k,
                                   std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (n < k) throw std::invalid_argument("kfold_split: need at least k records");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  // First n % k folds take one extra element.
  std::vector<FoldSplit> folds(k);
  const std::size_t base = n / k, extra = n % k;
  std::size_t pos = 0;
  std::vector<std::vector<std::size_t>> test_sets(k);
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    test_sets[f].assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }
  for (std::size_t f = 0; f < k; ++f) {
    folds[f].test = test_sets[f];
    for (std::size_t g = 0; g < k; ++g) {
      if (g == f) continue;
      folds[f].train.insert(folds[f].train.end(), test_sets[g].begin(),
                            test_sets[g].end());
    }
  }
  return folds;
}

}  // namespace ctt
