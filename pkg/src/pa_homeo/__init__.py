"""区分アフィン同相写像による BV 写像の面積強収束近似

グリッド・幾何代表・同相拡張・近似パイプラインと、その検証用の解析的テスト写像
"""

__version__ = "0.3.0"
__author__ = "pa-homeo-approx"
