#pragma once

#include <json.hpp>

#include "gjekit/common.hpp"

namespace gjekit {

using Json = nlohmann::json;

inline Json vec_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Json mat_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
    return rows;
}

inline Json points_json(const PointList& pts) {
    Json a = Json::array();
    for (const auto& p : pts) a.push_back(vec_json(p));
    return a;
}

inline Vec json_vec(const Json& j) {
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

}  // namespace gjekit
