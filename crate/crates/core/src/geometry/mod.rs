//! Triangle meshes, surface sampling, closest-point queries and mesh files.

mod distance;
mod icosphere;
mod io;
mod mesh;
mod sampling;

pub use distance::{
    closest_point_brute_force, closest_point_on_triangle, point_to_surface_distance, ClosestPoint,
    PointLocator, SurfaceLocator,
};
pub use icosphere::{icosphere, MAX_ICOSPHERE_DEPTH};
pub use io::{load_mesh, load_ply_colored, parse_obj, save_mesh, save_ply_colored, write_obj, MeshFormat};
pub use mesh::{angle_deg, TriMesh, Vec3, VertexNormals};
pub use sampling::{sample_surface, sample_unit_sphere, AreaSampler, SurfaceSample};
