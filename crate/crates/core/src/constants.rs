//! Physical constants (CODATA 2018 exact/recommended values).

/// Elementary charge in coulombs (exact since the 2019 SI redefinition).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Planck constant in joule-seconds (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Vacuum permeability in newtons per ampere squared.
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;

/// Bohr magneton in joules per tesla.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;

/// e * mu0 * muB / h in meters: converts a magnetic moment in Bohr
/// magnetons divided by a radius in meters into a phase-modulation
/// amplitude in radians. Approximately 2.82e-15 m.
pub const DIPOLE_PHASE_SCALE: f64 =
    ELEMENTARY_CHARGE * VACUUM_PERMEABILITY * BOHR_MAGNETON / PLANCK;

/// Default electron wavelength in meters: 300 keV acceleration voltage
/// (relativistic de Broglie wavelength 1.97 pm). A configuration default,
/// not a hard-wired assumption; every public API takes the wavelength from
/// the grid.
pub const DEFAULT_ELECTRON_WAVELENGTH: f64 = 1.97e-12;
