#include "cosmolod/camera.hpp"

#include "json.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace cosmolod {

using nlohmann::json;

void Camera::validate() const
{
    if (!position.allFinite() || !look_at.allFinite() || !up.allFinite())
        throw std::invalid_argument("camera vectors must be finite");
    const Vec3 view = look_at - position;
    if (view.squaredNorm() == 0.0)
        throw std::invalid_argument("camera position equals look_at");
    if (view.normalized().cross(up).squaredNorm() < 1e-18 * up.squaredNorm() || up.squaredNorm() == 0.0)
        throw std::invalid_argument("camera up vector is parallel to the view direction");
    if (!(fov_y > 0.0 && fov_y < 180.0))
        throw std::invalid_argument("camera fov_y must lie in (0, 180) degrees");
    if (width < 1 || height < 1)
        throw std::invalid_argument("camera viewport must be at least 1x1");
    if (!(near > 0.0) || !std::isfinite(near))
        throw std::invalid_argument("camera near distance must be positive");
}

double Camera::focal_px() const
{
    return height / (2.0 * std::tan(fov_y * std::numbers::pi / 360.0));
}

namespace {

Vec3 vec3_from(const json& j, const char* key)
{
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw std::invalid_argument(std::string("camera field '") + key + "' must be a 3-element array");
    return {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
}

} // namespace

Camera Camera::from_json(const std::string& text)
{
    Camera cam;
    try {
        const json j = json::parse(text);
        cam.position = vec3_from(j, "position");
        cam.look_at = vec3_from(j, "look_at");
        cam.up = j.contains("up") ? vec3_from(j, "up") : Vec3::UnitY();
        cam.fov_y = j.value("fov_y", 60.0);
        cam.width = j.value("width", 1024);
        cam.height = j.value("height", 768);
        cam.near = j.value("near", 0.01);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed camera JSON: ") + e.what());
    }
    cam.validate();
    return cam;
}

std::string Camera::to_json() const
{
    json j;
    j["position"] = {position.x(), position.y(), position.z()};
    j["look_at"] = {look_at.x(), look_at.y(), look_at.z()};
    j["up"] = {up.x(), up.y(), up.z()};
    j["fov_y"] = fov_y;
    j["width"] = width;
    j["height"] = height;
    j["near"] = near;
    return j.dump();
}

CameraFrame::CameraFrame(const Camera& cam)
    : eye(cam.position), focal(cam.focal_px()), cx(cam.width / 2.0), cy(cam.height / 2.0), near(cam.near)
{
    forward = (cam.look_at - cam.position).normalized();
    right = forward.cross(cam.up).normalized();
    down = forward.cross(right);
}

Frustum::Frustum(const Camera& cam)
{
    const CameraFrame f(cam);
    const double tx = f.cx / f.focal;
    const double ty = f.cy / f.focal;
    using Plane = Eigen::Hyperplane<double, 3>;
    // x_c <= tx z_c  <=>  (tx forward - right) . (p - eye) >= 0, etc.
    planes_[0] = Plane(f.forward, f.eye + f.near * f.forward);
    planes_[1] = Plane((tx * f.forward - f.right).normalized(), f.eye);
    planes_[2] = Plane((tx * f.forward + f.right).normalized(), f.eye);
    planes_[3] = Plane((ty * f.forward - f.down).normalized(), f.eye);
    planes_[4] = Plane((ty * f.forward + f.down).normalized(), f.eye);
}

FrustumClass Frustum::classify(const Aabb& box) const
{
    bool straddles = false;
    for (const auto& plane : planes_) {
        const Vec3& n = plane.normal();
        Vec3 far_corner, near_corner;
        for (int axis = 0; axis < 3; ++axis) {
            far_corner[axis] = n[axis] >= 0 ? box.max()[axis] : box.min()[axis];
            near_corner[axis] = n[axis] >= 0 ? box.min()[axis] : box.max()[axis];
        }
        if (plane.signedDistance(far_corner) < 0.0)
            return FrustumClass::outside;
        if (plane.signedDistance(near_corner) < 0.0)
            straddles = true;
    }
    return straddles ? FrustumClass::intersecting : FrustumClass::inside;
}

bool Frustum::contains(const Vec3& p) const
{
    for (const auto& plane : planes_)
        if (plane.signedDistance(p) < 0.0)
            return false;
    return true;
}

double screen_space_error(const Aabb& box, const Vec3& eye, double focal_px)
{
    const double d = std::sqrt(box.squaredExteriorDistance(eye));
    if (d == 0.0)
        return std::numeric_limits<double>::infinity();
    return box.sizes().maxCoeff() / d * focal_px;
}

double screen_space_error(const Aabb& box, const Camera& cam)
{
    return screen_space_error(box, cam.position, cam.focal_px());
}

} // namespace cosmolod
