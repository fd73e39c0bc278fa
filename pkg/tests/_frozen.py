"""Reference values computed once with mpmath at 100 digits from the defining
expressions: Z = Phi(b) - Phi(a) via erfc on whichever side avoids
cancellation, zeta1 = (phi(b) - phi(a)) / Z, zeta2 = (b phi(b) - a phi(a)) / Z.

Columns: lower, upper, log Z, zeta1, zeta2.
"""
import math

inf = math.inf

TRUNC_TABLE = [
    (0.0, 1.0, -1.0748623268620714, -0.4598622292864265, 0.70887490522720679),
    (-1.0, 1.0, -0.38171514630212607, 0.0, 0.70887490522720679),
    (0.0, inf, -0.69314718055994531, -0.79788456080286536, 0.0),
    (-inf, 0.0, -0.69314718055994531, 0.79788456080286536, 0.0),
    (2.0, 3.0, -3.8443534263342056, -2.3158213267437818, -4.4245491969758199),
    (-3.0, -2.0, -3.8443534263342056, 2.3158213267437818, -4.4245491969758199),
    (8.0, 9.0, -35.013618593437148, -8.1211889929797971, -64.967859202478959),
    (-9.0, -8.0, -35.013618593437148, 8.1211889929797971, -64.967859202478959),
    (8.0, inf, -35.01343715991455, -8.1213681122361127, -64.970944897888901),
    (-inf, -8.0, -35.01343715991455, 8.1213681122361127, -64.970944897888901),
    (30.0, inf, -454.3212439563432, -30.033259667433677, -900.99779002301031),
    (-inf, -40.0, -804.60844201375379, 40.024968847207264, -1600.9987538882905),
    (5.0, 5.001, -20.329192936978384, -5.0004995832918544, -24.004996165835236),
    (-0.3, -0.2999, -10.174263906810145, 0.29994999975004166, 0.91002999681661667),
    (0.001, 0.002, -7.826694978853382, -0.0014999998750000042, 0.99999766666704444),
    (-2.0, inf, -0.023012909328963488, -0.055247862678989959, 0.11049572535797992),
    (-inf, 1.5, -0.069143455612233983, 0.13878975045885076, 0.20818462568827613),
    (12.0, 12.5, -75.412776310697438, -12.081168166075985, -144.96077530060974),
    (-0.5, 30.0, -0.36894641528865639, -0.50916043383703349, 0.25458021691851674),
    (26.0, 26.01, -343.65130923136632, -26.004783536246062, -675.248775072218),
    (100.0, inf, -5005.5242086942051, -100.00999800099926, -10000.999800099926),
    (-1e-08, 1e-08, -18.646472096597093, 0.0, 0.99999999999999997),
]
