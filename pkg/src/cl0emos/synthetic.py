"""
Synthetic forecast archives with known error structure.

Observations follow a censored logistic around a cloudy-sky signal
``clear_sky * cloudiness``; the raw ensemble is shifted by a fraction of the
signal and has a reduced spread, so a well-specified post-processing model
exists and the raw ensemble is biased and underdispersive.
"""
import numpy as np

from .data import Archive

SOLAR_CONSTANT = 1098.0


def clear_sky_ghi(valid_time, lat_deg, lon_deg):
    """Haurwitz-type clear-sky GHI (W/m^2) from solar geometry at UTC times."""
    vt = np.asarray(valid_time, dtype="datetime64[m]")
    doy = (vt.astype("datetime64[D]") - vt.astype("datetime64[Y]").astype("datetime64[D]")).astype(int) + 1
    hours = (vt - vt.astype("datetime64[D]")) / np.timedelta64(1, "h")
    decl = np.deg2rad(23.45) * np.sin(2 * np.pi * (284 + doy) / 365.0)
    solar_time = hours + np.asarray(lon_deg) / 15.0
    omega = np.deg2rad(15.0 * (solar_time - 12.0))
    lat = np.deg2rad(lat_deg)
    sin_elev = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(omega)
    sin_elev = np.maximum(sin_elev, 0.0)
    with np.errstate(divide="ignore"):
        ghi = SOLAR_CONSTANT * sin_elev * np.exp(-0.057 / np.where(sin_elev > 0, sin_elev, 1.0))
    return np.where(sin_elev > 0.01, ghi, 0.0)


def simulate_archive(n_stations=3, n_days=100, start="2020-05-07", leads_minutes=None,
                     init_hours=(0,), n_members=11, bias=0.2, spread_factor=0.5,
                     noise_frac=0.12, missing_frac=0.01, seed=0):
    """Generate a synthetic archive.

    Parameters
    ----------
    n_stations, n_days : int
        Archive extent; stations are spread over 46-49 N, 17-22 E.
    leads_minutes : sequence of int, optional
        Defaults to hourly leads 60..1440.
    bias : float
        Additive ensemble bias as a fraction of the signal.
    spread_factor : float
        Ensemble spread relative to the spread of the truth.
    noise_frac : float
        Logistic scale of the observation error as a fraction of clear-sky GHI.
    missing_frac : float
        Fraction of observations set missing.

    Returns
    -------
    Archive
    """
    rng = np.random.default_rng(seed)
    if leads_minutes is None:
        leads_minutes = np.arange(60, 24 * 60 + 1, 60)
    leads = np.asarray(leads_minutes, dtype=np.int64)
    days = np.datetime64(start, "D") + np.arange(n_days)
    lats = np.linspace(46.0, 49.0, n_stations)
    lons = np.linspace(17.0, 22.0, n_stations)
    stations = np.array([f"ST{i + 1:02d}" for i in range(n_stations)], dtype=object)
    horizon_days = int(np.ceil((max(init_hours) * 60 + leads.max()) / 1440.0)) + 1

    # daily cloudiness per station: AR(1) in logit space
    n_cloud_days = n_days + horizon_days
    z = np.zeros((n_stations, n_cloud_days))
    z[:, 0] = rng.normal(0.0, 1.0, n_stations)
    for d in range(1, n_cloud_days):
        z[:, d] = 0.6 * z[:, d - 1] + rng.normal(0.0, 0.8, n_stations)
    cloud = 0.15 + 0.85 / (1.0 + np.exp(-(z + 1.0)))

    st_i, day_i, ih_i, lead_i = np.meshgrid(np.arange(n_stations), np.arange(n_days),
                                            np.arange(len(init_hours)), np.arange(len(leads)),
                                            indexing="ij")
    st_i, day_i, ih_i, lead_i = (a.ravel() for a in (st_i, day_i, ih_i, lead_i))
    init = (days[day_i].astype("datetime64[m]")
            + np.asarray(init_hours, dtype=np.int64)[ih_i] * np.timedelta64(60, "m"))
    lead = leads[lead_i]
    valid = init + lead * np.timedelta64(1, "m")
    cs = clear_sky_ghi(valid, lats[st_i], lons[st_i])
    vday = (valid.astype("datetime64[D]") - days[0]).astype(int)
    signal = cs * cloud[st_i, vday]

    n = len(signal)
    scale = noise_frac * cs
    obs = np.maximum(signal + scale * rng.logistic(size=n), 0.0)
    members = (1.0 + bias) * signal[:, None] + spread_factor * scale[:, None] * rng.logistic(size=(n, n_members))
    members = np.maximum(members, 0.0)
    obs[rng.random(n) < missing_frac] = np.nan

    arc = Archive(stations[st_i], init, lead, members, obs, cs,
                  tuple(f"m{i + 1}" for i in range(n_members)))
    return arc.sorted()


def arome_groups(member_columns):
    """Control member first, the remaining members exchangeable."""
    return {"control": [member_columns[0]], "perturbed": list(member_columns[1:])}
