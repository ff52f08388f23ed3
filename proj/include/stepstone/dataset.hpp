#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "stepstone/nn/features.hpp"
#include "stepstone/robot.hpp"

namespace stepstone {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Gait { trot, jump };

inline const char* to_string(Gait g) { return g == Gait::trot ? "trot" : "jump"; }

inline Gait gait_from_string(const std::string& s) {
  if (s == "trot") return Gait::trot;
  if (s == "jump") return Gait::jump;
  throw std::invalid_argument("unknown gait '" + s + "'");
}

/// One recorded gait cycle. Contacts are expressed in the base frame at the
/// start of the cycle.
struct TransitionRecord {
  ReducedRobotState x;
  PointMatrix e_cur;
  PointMatrix e_tgt;
  std::optional<PointMatrix> e_ach;  // present iff y == 1
  int y = 0;
  std::optional<ReducedRobotState> x_next;  // present iff y == 1
  Gait gait = Gait::jump;
};

namespace detail {

inline nlohmann::json points_to_json(const PointMatrix& p) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < p.rows(); ++r) j.push_back({p(r, 0), p(r, 1), p(r, 2)});
  return j;
}

inline PointMatrix points_from_json(const nlohmann::json& j) {
  PointMatrix p(static_cast<Eigen::Index>(j.size()), 3);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != 3) throw DatasetError("contact rows must have 3 entries");
    for (int c = 0; c < 3; ++c) p(static_cast<Eigen::Index>(r), c) = j[r][static_cast<std::size_t>(c)].get<double>();
  }
  return p;
}

inline nlohmann::json state_to_json(const ReducedRobotState& x) {
  const nn::Vector v = nn::encode_state(x);
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline ReducedRobotState state_from_json(const nlohmann::json& j, int n_effectors) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != static_cast<std::size_t>(nn::state_dim(n_effectors))) throw DatasetError("state vector has the wrong length");
  // Stored quaternions are unit already; keep the stored values bit-exact.
  ReducedRobotState x;
  x.base_quat = Quat(v[0], v[1], v[2], v[3]);
  x.joints = Eigen::Map<const Eigen::VectorXd>(v.data() + 4, 3 * n_effectors);
  x.base_linvel = Vec3(v[4 + 3 * static_cast<std::size_t>(n_effectors)], v[5 + 3 * static_cast<std::size_t>(n_effectors)],
                       v[6 + 3 * static_cast<std::size_t>(n_effectors)]);
  x.base_angvel = Vec3(v[7 + 3 * static_cast<std::size_t>(n_effectors)], v[8 + 3 * static_cast<std::size_t>(n_effectors)],
                       v[9 + 3 * static_cast<std::size_t>(n_effectors)]);
  return x;
}

}  // namespace detail

inline nlohmann::json record_to_json(const TransitionRecord& r) {
  nlohmann::json j;
  j["x"] = detail::state_to_json(r.x);
  j["e_cur"] = detail::points_to_json(r.e_cur);
  j["e_tgt"] = detail::points_to_json(r.e_tgt);
  j["e_ach"] = r.e_ach ? detail::points_to_json(*r.e_ach) : nlohmann::json(nullptr);
  j["y"] = r.y;
  j["x_next"] = r.x_next ? detail::state_to_json(*r.x_next) : nlohmann::json(nullptr);
  j["gait"] = to_string(r.gait);
  return j;
}

/// `require_label` rejects records without "y" (classifier training needs it).
inline TransitionRecord record_from_json(const nlohmann::json& j, bool require_label = true) {
  try {
    TransitionRecord r;
    r.e_cur = detail::points_from_json(j.at("e_cur"));
    r.e_tgt = detail::points_from_json(j.at("e_tgt"));
    const int n = static_cast<int>(r.e_cur.rows());
    if (r.e_tgt.rows() != n) throw DatasetError("e_cur and e_tgt sizes differ");
    r.x = detail::state_from_json(j.at("x"), n);
    if (j.contains("y") && !j.at("y").is_null()) {
      r.y = j.at("y").get<int>();
      if (r.y != 0 && r.y != 1) throw DatasetError("label y must be 0 or 1");
    } else if (require_label) {
      throw DatasetError("record has no label 'y'");
    } else {
      r.y = -1;
    }
    if (j.contains("e_ach") && !j.at("e_ach").is_null()) r.e_ach = detail::points_from_json(j.at("e_ach"));
    if (j.contains("x_next") && !j.at("x_next").is_null()) r.x_next = detail::state_from_json(j.at("x_next"), n);
    r.gait = gait_from_string(j.value("gait", std::string("jump")));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("dataset schema error: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DatasetError(std::string("dataset schema error: ") + e.what());
  }
}

inline void write_jsonl(const std::vector<TransitionRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline void save_dataset(const std::vector<TransitionRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path);
  write_jsonl(records, out);
  if (!out) throw DatasetError("write failed for " + path);
}

inline std::vector<TransitionRecord> load_dataset(const std::string& path, bool require_label = true) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot read " + path);
  std::vector<TransitionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line), require_label));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// Training matrices ----------------------------------------------------------

/// Classifier samples: [x, e_cur, e_tgt] -> y, one column per record.
inline std::pair<nn::Matrix, nn::Matrix> classifier_samples(const std::vector<TransitionRecord>& records) {
  if (records.empty()) throw DatasetError("empty dataset");
  const int n = static_cast<int>(records.front().e_cur.rows());
  nn::Matrix x(nn::feature_dim(n), static_cast<Eigen::Index>(records.size()));
  nn::Matrix y(1, static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.y != 0 && r.y != 1) throw DatasetError("classifier training requires labels");
    x.col(static_cast<Eigen::Index>(i)) = nn::build_features(r.x, {r.e_cur, Frame::base}, {r.e_tgt, Frame::base});
    y(0, static_cast<Eigen::Index>(i)) = r.y;
  }
  return {x, y};
}

/// Two-head samples from successful records: [x, e_cur, e_ach] ->
/// [x_next ; e_ach - e_tgt].
inline std::pair<nn::Matrix, nn::Matrix> transition_samples(const std::vector<TransitionRecord>& records) {
  std::vector<const TransitionRecord*> ok;
  for (const auto& r : records) {
    if (r.y == 1 && r.e_ach && r.x_next) ok.push_back(&r);
  }
  if (ok.empty()) throw DatasetError("no successful transitions to train on");
  const int n = static_cast<int>(ok.front()->e_cur.rows());
  const int sd = nn::state_dim(n), rd = nn::residual_dim(n);
  nn::Matrix x(nn::feature_dim(n), static_cast<Eigen::Index>(ok.size()));
  nn::Matrix y(sd + rd, static_cast<Eigen::Index>(ok.size()));
  for (std::size_t i = 0; i < ok.size(); ++i) {
    const auto& r = *ok[i];
    const auto c = static_cast<Eigen::Index>(i);
    x.col(c) = nn::build_features(r.x, {r.e_cur, Frame::base}, {*r.e_ach, Frame::base});
    y.col(c).head(sd) = nn::encode_state(*r.x_next);
    y.col(c).tail(rd) = nn::flatten(*r.e_ach - r.e_tgt);
  }
  return {x, y};
}

}  // namespace stepstone
