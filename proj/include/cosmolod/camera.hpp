#pragma once

#include "cosmolod/geometry.hpp"

#include <Eigen/Geometry>

#include <array>
#include <string>

namespace cosmolod {

/// Pinhole camera. Image rows grow downward; x grows to the right.
struct Camera {
    Vec3 position = Vec3(0, 0, 1);
    Vec3 look_at = Vec3::Zero();
    Vec3 up = Vec3::UnitY();
    double fov_y = 60.0; ///< vertical field of view in degrees
    int width = 1024;
    int height = 768;
    double near = 0.01;

    /// Throws std::invalid_argument when the camera is degenerate.
    void validate() const;

    /// Focal length in pixels: H / (2 tan(fov_y / 2)).
    double focal_px() const;

    static Camera from_json(const std::string& text);
    std::string to_json() const;
};

/// Orthonormal camera basis plus projection constants.
struct CameraFrame {
    Vec3 eye;
    Vec3 right;
    Vec3 down;
    Vec3 forward;
    double focal = 1.0;
    double cx = 0.0, cy = 0.0;
    double near = 0.0;

    explicit CameraFrame(const Camera& cam);

    Vec3 to_camera(const Vec3& world) const
    {
        const Vec3 d = world - eye;
        return {d.dot(right), d.dot(down), d.dot(forward)};
    }
};

enum class FrustumClass { outside, intersecting, inside };

/// Near plane plus four side planes, normals pointing into the view volume.
/// There is no far plane.
class Frustum {
public:
    explicit Frustum(const Camera& cam);

    FrustumClass classify(const Aabb& box) const;
    bool contains(const Vec3& p) const;

private:
    std::array<Eigen::Hyperplane<double, 3>, 5> planes_;
};

inline FrustumClass frustum_classify(const Aabb& box, const Camera& cam) { return Frustum(cam).classify(box); }

/// Projected longest edge of `box` at its nearest point, in pixels; +inf when
/// the camera is inside the box.
double screen_space_error(const Aabb& box, const Camera& cam);
double screen_space_error(const Aabb& box, const Vec3& eye, double focal_px);

} // namespace cosmolod
