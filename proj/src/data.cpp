#include "privmtl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "privmtl/rng.hpp"

namespace privmtl {
namespace {

namespace fs = std::filesystem;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

ParamVector unit_sphere_draw(int dim, RngStream& rng) {
  ParamVector u(dim);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (int i = 0; i < dim; ++i) u[i] = rng.next_gaussian();
    norm = l2_norm(u);
  }
  return scale(u, 1.0 / norm);
}

double parse_cell(const std::string& cell, const std::string& file, int line) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(file + ":" + std::to_string(line) +
                      ": non-numeric cell '" + cell + "'");
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

SplitFederation generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int d = spec.feature_dim + 1;  // bias last

  RngStream shared_rng(seed, "synthetic-shared", 0);
  ParamVector shared = unit_sphere_draw(d, shared_rng);
  shared = scale(shared, 3.0);  // keep logits informative at unit features
  shared[d - 1] = 0.0;          // balanced labels

  SplitFederation fed;
  for (int k = 0; k < spec.m; ++k) {
    RngStream rng(seed, "synthetic-task", static_cast<std::uint64_t>(k));
    ParamVector w_true = shared;
    if (spec.heterogeneity > 0.0) {
      ParamVector u = unit_sphere_draw(d, rng);
      u[d - 1] = 0.0;
      add_in_place(w_true, u, 3.0 * spec.heterogeneity);
    }
    fed.true_weights.push_back(w_true);

    TaskDataset all;
    all.task_id = k;
    for (int i = 0; i < spec.n_k; ++i) {
      Example ex;
      ex.features.resize(spec.feature_dim);
      double z = w_true[d - 1];
      for (int j = 0; j < spec.feature_dim; ++j) {
        ex.features[j] = rng.next_gaussian();
        z += w_true[j] * ex.features[j];
      }
      ex.label = rng.next_double() < sigmoid(z) ? 1.0 : 0.0;
      if (spec.label_noise > 0.0 && rng.next_double() < spec.label_noise)
        ex.label = 1.0 - ex.label;
      all.examples.push_back(std::move(ex));
    }

    const int n = spec.n_k;
    const int n_train = std::max(1, (n * 8) / 10);
    const int n_val = std::max(1, n / 10);
    TaskDataset train{k, {}}, val{k, {}}, test{k, {}};
    for (int i = 0; i < n; ++i) {
      if (i < n_train)
        train.examples.push_back(all.examples[i]);
      else if (i < n_train + n_val && i < n - 1)
        val.examples.push_back(all.examples[i]);
      else
        test.examples.push_back(all.examples[i]);
    }
    if (val.examples.empty()) val.examples.push_back(all.examples.back());
    if (test.examples.empty()) test.examples.push_back(all.examples.front());
    fed.train.push_back(std::move(train));
    fed.val.push_back(std::move(val));
    fed.test.push_back(std::move(test));
  }
  return fed;
}

std::vector<TaskDataset> load_task_directory(const std::string& path) {
  if (!fs::is_directory(path))
    throw ConfigError("not a directory: " + path);
  int max_index = -1;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("task_", 0) != 0 || entry.path().extension() != ".csv")
      continue;
    files.push_back(entry.path());
    const int k = std::stoi(name.substr(5, name.size() - 9));
    max_index = std::max(max_index, k);
  }
  if (files.empty()) throw ConfigError("no task_<k>.csv files in " + path);

  std::vector<TaskDataset> tasks(max_index + 1);
  std::vector<bool> seen(max_index + 1, false);
  std::size_t width = 0;
  for (const auto& file : files) {
    const std::string name = file.filename().string();
    const int k = std::stoi(name.substr(5, name.size() - 9));
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line))
      throw ConfigError(file.string() + ": empty file");
    const std::size_t cols = split_csv_line(line).size();
    if (cols < 2)
      throw ConfigError(file.string() + ": header needs features and label");
    if (width == 0) width = cols - 1;
    if (cols - 1 != width)
      throw ConfigError(file.string() + ": feature width " +
                        std::to_string(cols - 1) + " does not match " +
                        std::to_string(width));
    TaskDataset task;
    task.task_id = k;
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != cols)
        throw ConfigError(file.string() + ":" + std::to_string(lineno) +
                          ": ragged row (" + std::to_string(cells.size()) +
                          " cells, expected " + std::to_string(cols) + ")");
      Example ex;
      for (std::size_t c = 0; c + 1 < cells.size(); ++c)
        ex.features.push_back(parse_cell(cells[c], file.string(), lineno));
      ex.label = parse_cell(cells.back(), file.string(), lineno);
      task.examples.push_back(std::move(ex));
    }
    task.validate();
    tasks[k] = std::move(task);
    seen[k] = true;
  }
  for (int k = 0; k <= max_index; ++k)
    if (!seen[k]) throw ConfigError("missing task_" + std::to_string(k));
  return tasks;
}

void write_task_directory(const std::string& path,
                          const std::vector<TaskDataset>& tasks) {
  fs::create_directories(path);
  for (const auto& task : tasks) {
    std::ofstream out(fs::path(path) /
                      ("task_" + std::to_string(task.task_id) + ".csv"));
    const std::size_t p = task.feature_width();
    for (std::size_t c = 0; c < p; ++c) out << "f" << c << ",";
    out << "label\n";
    for (const auto& ex : task.examples) {
      for (double f : ex.features) out << format_double(f) << ",";
      out << format_double(ex.label) << "\n";
    }
  }
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

void write_trace_csv(const std::string& path, const RunTrace& trace) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "round,avg_train_loss,epsilon_spent,avg_val_acc\n";
  for (const auto& r : trace.rounds) {
    out << r.round << "," << format_double(r.avg_train_loss) << ","
        << format_double(r.epsilon_spent) << ",";
    if (r.avg_val_accuracy) out << format_double(*r.avg_val_accuracy);
    out << "\n";
  }
}

RunTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "round,avg_train_loss,epsilon_spent,avg_val_acc")
    throw ConfigError(path + ": unexpected trace header");
  RunTrace trace;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 4)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": ragged row");
    RoundRecord r;
    r.round = static_cast<int>(parse_cell(cells[0], path, lineno));
    r.avg_train_loss = parse_cell(cells[1], path, lineno);
    r.epsilon_spent = parse_cell(cells[2], path, lineno);
    if (!cells[3].empty()) r.avg_val_accuracy = parse_cell(cells[3], path, lineno);
    trace.rounds.push_back(r);
  }
  return trace;
}

}  // namespace privmtl
