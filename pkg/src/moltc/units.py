"""Unit conversions. Everything inside the package runs in atomic units."""

HARTREE_EV = 27.211386
BOHR_ANGSTROM = 0.529177
AU_TIME_FS = 0.0241888
AU_DIPOLE_DEBYE = 2.541746
HARTREE_WAVENUMBER = 219474.63
# atomic unit of electric field, hartree / (e * bohr), expressed in V/nm
AU_FIELD_V_PER_NM = HARTREE_EV / (BOHR_ANGSTROM * 0.1)


def ev_to_au(x):
    return x / HARTREE_EV


def au_to_ev(x):
    return x * HARTREE_EV


def angstrom_to_au(x):
    return x / BOHR_ANGSTROM


def au_to_angstrom(x):
    return x * BOHR_ANGSTROM


def fs_to_au(x):
    return x / AU_TIME_FS


def au_to_fs(x):
    return x * AU_TIME_FS


def rate_fs_to_au(x):
    """Convert a rate in 1/fs to 1/(atomic time unit)."""
    return x * AU_TIME_FS


def rate_au_to_fs(x):
    return x / AU_TIME_FS


def debye_to_au(x):
    return x / AU_DIPOLE_DEBYE


def au_to_debye(x):
    return x * AU_DIPOLE_DEBYE


def field_v_per_nm_to_au(x):
    return x / AU_FIELD_V_PER_NM


def wavenumber_to_au(x):
    return x / HARTREE_WAVENUMBER


def au_to_wavenumber(x):
    return x * HARTREE_WAVENUMBER
