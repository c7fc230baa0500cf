"""
Sensor front ends
=================

Each channel reports through a linear map into the 0-5 V converter swing.
This walk-through prints a few reference points for each of the three
default sensors and the tachometer pulse rate.
"""
# %%
# Temperature: 22.5 mV per degree, 0.25 V at the bottom of the range.
import numpy as np

from swarmpid import TachSpec, gyroscope_map, sensor_to_voltage, tach_frequency, tachometer_map, temperature_map
from swarmpid import voltage_to_physical

temp = temperature_map()
for celsius in (-50.0, 0.0, 25.0, 100.0, 150.0):
    print(f"{celsius:7.1f} C -> {sensor_to_voltage(temp, celsius):.4f} V")

# %%
# Gyroscope: zero rate sits at mid-swing, so the channel reads both
# directions of rotation.
gyro = gyroscope_map()
rates = np.array([-23.27, -10.0, 0.0, 10.0, 23.27])
for rate, volts in zip(rates, sensor_to_voltage(gyro, rates)):
    print(f"{rate:7.2f} rad/s -> {volts:.4f} V")

# %%
# Readings outside the swing saturate; converting back refuses voltages
# the converter could never have produced.
print("40 rad/s reads as", sensor_to_voltage(gyro, 40.0), "V")
try:
    voltage_to_physical(gyro, 5.2)
except ValueError as exc:
    print("rejected:", exc)

# %%
# Tachometer: speed maps linearly to 0-5 V, and the toothed wheel gives a
# pulse train whose frequency is rpm / 60 times the tooth count.
tach = tachometer_map()
print("1500 rpm ->", sensor_to_voltage(tach, 1500.0), "V")
print("3000 rpm, 2 teeth ->", tach_frequency(TachSpec(teeth_N=2, rpm=3000)), "Hz")
