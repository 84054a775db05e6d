"""
テスト共通の設定とフィクスチャ
"""

import os
import sys

import numpy as np
import pytest
from loguru import logger

# テスト対象モジュールのパスを追加
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from pa_homeo.geom.pa_map import PAHomeo  # noqa: E402
from pa_homeo.geom.triangulation import Triangulation  # noqa: E402
from pa_homeo.mapcat.catalogue import make_catalogue_map  # noqa: E402


@pytest.fixture(autouse=True)
def quiet_logs():
    """テスト中は WARNING 以上だけを標準エラーへ"""
    logger.remove()
    logger.add(sys.stderr, level="WARNING")
    yield
    logger.remove()


@pytest.fixture
def identity_map():
    return make_catalogue_map("identity")


@pytest.fixture
def fracture_map():
    return make_catalogue_map("fracture")


@pytest.fixture
def affine_map():
    return make_catalogue_map("affine")


@pytest.fixture
def rank_one_map():
    return make_catalogue_map("rank_one")


@pytest.fixture
def unit_square_mesh():
    """Q(0,1) を 2 枚の三角形に分けたもの"""
    vertices = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    return Triangulation(vertices, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture
def identity_homeo(unit_square_mesh):
    return PAHomeo.identity(unit_square_mesh)
