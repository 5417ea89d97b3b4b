import pytest

from modelvalidity.dynamics import VehicleParams
from modelvalidity.plant import ManeuverSpec, NoiseSigmas
from modelvalidity.validity import CandidateModel, ModelId, model_controls, simulate_model_trajectory

SLALOM = ManeuverSpec(kind="slalom", target_ay_max=4.0, initial_speed=20.0, duration=20.0, seed=7)


@pytest.fixture
def vehicle():
    return VehicleParams()


@pytest.fixture(params=[m.value for m in ModelId])
def candidate(request):
    return CandidateModel(ModelId(request.param))


@pytest.fixture
def model_trajectory():
    """Factory: noiseless (or noisy) trajectory generated by a candidate model itself."""

    def make(model="dbm-pacejka", spec=SLALOM, noise=NoiseSigmas.zero(), seed=0, name=None):
        cm = model if isinstance(model, CandidateModel) else CandidateModel(ModelId(model))
        return simulate_model_trajectory(
            cm, model_controls(spec, cm), name=name or f"self_{cm.model_id.value}", noise=noise, seed=seed
        )

    return make
