pub mod cavity;
pub mod coating;
pub mod ldos;
pub mod photons;
pub mod reproduce;
pub mod waveguide;
