"""
Two ways a disturbance ends
===========================

A brief sensor pulse is absorbed by the existing PID gains.  A lasting
change in the plant, met with poor gains, outlasts the recovery deadline
and is handed to the swarm tuner.  The second run simulates 300 s and
takes about 20 seconds.
"""
# %%
from swarmpid import GainCode, Scenario, compute_metrics, run_scenario
from swarmpid.sim import DisturbanceKind, DisturbanceSpec, default_channels


def show(result):
    names = ["motor", "temperature", "gyroscope"]
    for e in result.events:
        print(f"  t={e.time:8.3f}s  {names[e.channel]:<12} {e.kind.value}")


# %%
# Pulse: 1 V on the motor sensor from 30 s to 40 s.
pulse = Scenario(duration=60.0, disturbances=[DisturbanceSpec(0, DisturbanceKind.PULSE, 30.0, 40.0, 1.0)])
res = run_scenario(pulse)
print("pulse:")
show(res)

# %%
# Parameter shift: motor gain doubles at 10 s while the loop runs on a
# nearly integral-free code.
channels = default_channels()
channels[0].initial_code = GainCode(0, 15, 0)
shift = Scenario(
    duration=300.0,
    channels=channels,
    disturbances=[DisturbanceSpec(0, DisturbanceKind.PARAMETER_SHIFT, 10.0, magnitude=2.0)],
)
res = run_scenario(shift)
print("parameter shift:")
show(res)
print("installed code:", res.codes[0].as_tuple())

# %%
# Error integrated over the first 5 s after detection, and over the 5 s
# after the new code went in.
t_detect = res.events[0].time
t_done = res.events[-1].time
eps = shift.supervisor.epsilon_v
print(f"IAE after detection: {compute_metrics(res.telemetry, 0, eps, t_detect, t_detect + 5).iae:.4f}")
print(f"IAE after install:   {compute_metrics(res.telemetry, 0, eps, t_done, t_done + 5).iae:.2e}")
